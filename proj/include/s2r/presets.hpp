#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "s2r/traj.hpp"

namespace s2r::presets {

/// Flag bundle for one generated dataset.
struct Preset {
  std::string name;
  std::string domain = "sim";
  bool adversarial = false;
  sim::RenderMode mode = sim::RenderMode::plain;
  std::size_t n = 400;
  int image_every = 0;  // 0: no images written
  double camera_scale = 1.0;
  double background = 0.35;  // plain backdrop grey level
  /// Added to the base seed so a domain never reuses another preset's layouts.
  std::uint64_t seed_offset = 0;

  /// Throws InvalidArgument. "3DGS-" names need splat rendering, names
  /// containing "ADSim" need the adversary, "BaseSim" must not have it.
  void validate() const;
  traj::AdversarialConfig adversarial_config() const;
  /// `image_root` is the dataset directory; images are skipped when it is empty.
  traj::GenOptions gen_options(const std::string& image_root) const;
};

/// Co-training of two presets: draw from `sim` with probability alpha.
struct Mixture {
  std::string name;
  std::string real, sim;
  double alpha = 0.5;
};

struct PresetTable {
  std::vector<Preset> presets;
  std::vector<Mixture> mixtures;

  /// Exact name, or "<name><N>" for a preset with N episodes. Throws InvalidArgument.
  Preset preset(const std::string& name) const;
  std::optional<Mixture> mixture(const std::string& name) const;
  std::vector<std::string> names() const;
};

/// Lines "preset <name> key=value..." and "mixture <name> real=.. sim=.. alpha=..".
/// Throws ParseError (source:line).
PresetTable parse_presets(const std::string& text, const std::string& source = "presets");
PresetTable load_presets(const std::string& path);
/// Built-in table, identical to config/presets.cfg.
const PresetTable& default_presets();

}  // namespace s2r::presets
