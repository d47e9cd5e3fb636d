#include "s2r/presets.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

namespace s2r::presets {

namespace {

// Same table as config/presets.cfg.
constexpr const char* kDefaultPresets = R"(# Dataset presets. Keys not given keep their defaults.
#   domain=sim|real_analog adversarial=on|off render=plain|splat n=episodes
#   images=K (every K-th step rendered, 0 = none) camera_scale background seed_offset
preset BaseSim     domain=sim adversarial=off render=plain n=400
preset ADSim       domain=sim adversarial=on  render=plain n=400
preset 3DGS-ADSim  domain=sim adversarial=on  render=splat n=400 images=10
# Domain-shifted stand-in for real demonstrations: other layouts, other optics.
preset RealAnalog  domain=real_analog adversarial=off render=plain n=35 images=10 camera_scale=1.1 background=0.5 seed_offset=1000000

# Co-training mixtures: sim is drawn with probability alpha.
mixture Real35&ADSim       real=RealAnalog sim=ADSim      alpha=0.92
mixture Real35&3DGS-ADSim  real=RealAnalog sim=3DGS-ADSim alpha=0.92
)";

bool parse_flag(const std::string& v, const std::string& ctx) {
  if (v == "on") return true;
  if (v == "off") return false;
  raise(ErrorKind::ParseError, ctx + ": expected on|off, got '" + v + "'");
}

}  // namespace

void Preset::validate() const {
  if (name.empty()) raise(ErrorKind::InvalidArgument, "preset needs a name");
  if (domain != "sim" && domain != "real_analog")
    raise(ErrorKind::InvalidArgument, "preset " + name + ": domain must be sim or real_analog");
  if (n == 0) raise(ErrorKind::InvalidArgument, "preset " + name + ": n must be >= 1");
  if (image_every < 0) raise(ErrorKind::InvalidArgument, "preset " + name + ": images must be >= 0");
  if (!(camera_scale > 0)) raise(ErrorKind::InvalidArgument, "preset " + name + ": camera_scale must be > 0");
  if (!(background >= 0 && background <= 1))
    raise(ErrorKind::InvalidArgument, "preset " + name + ": background must be in [0, 1]");
  if (name.rfind("3DGS-", 0) == 0 && mode != sim::RenderMode::splat)
    raise(ErrorKind::InvalidArgument, "preset " + name + " must render splats");
  if (name.find("ADSim") != std::string::npos && !adversarial)
    raise(ErrorKind::InvalidArgument, "preset " + name + " must enable the adversary");
  if (name.find("BaseSim") != std::string::npos && adversarial)
    raise(ErrorKind::InvalidArgument, "preset " + name + " must not enable the adversary");
}

traj::AdversarialConfig Preset::adversarial_config() const {
  traj::AdversarialConfig a;
  a.enabled = adversarial;
  return a;
}

traj::GenOptions Preset::gen_options(const std::string& image_root) const {
  traj::GenOptions o;
  o.preset = name;
  o.domain = domain;
  o.mode = mode;
  o.render = image_every > 0 && !image_root.empty();
  o.render_every = std::max(1, image_every);
  o.image_root = image_root;
  o.camera_scale = camera_scale;
  o.plain_background = geom::Vec3::Constant(background);
  return o;
}

Preset PresetTable::preset(const std::string& name) const {
  for (const auto& p : presets)
    if (p.name == name) return p;
  // "<name><N>" resizes a preset, e.g. RealAnalog35.
  std::size_t digits = name.size();
  while (digits > 0 && std::isdigit(static_cast<unsigned char>(name[digits - 1]))) --digits;
  if (digits < name.size() && digits > 0)
    for (const auto& p : presets)
      if (p.name == name.substr(0, digits)) {
        Preset out = p;
        out.name = name;
        out.n = std::stoul(name.substr(digits));
        out.validate();
        return out;
      }
  raise(ErrorKind::InvalidArgument, "unknown preset '" + name + "'");
}

std::optional<Mixture> PresetTable::mixture(const std::string& name) const {
  for (const auto& m : mixtures)
    if (m.name == name) return m;
  return std::nullopt;
}

std::vector<std::string> PresetTable::names() const {
  std::vector<std::string> out;
  for (const auto& p : presets) out.push_back(p.name);
  for (const auto& m : mixtures) out.push_back(m.name);
  return out;
}

PresetTable parse_presets(const std::string& text, const std::string& source) {
  PresetTable t;
  std::istringstream in(text);
  std::string line;
  int no = 0;
  while (std::getline(in, line)) {
    ++no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const auto tok = split_ws(line);
    if (tok.empty()) continue;
    const std::string ctx = source + ":" + std::to_string(no);
    if (tok.size() < 2 || (tok[0] != "preset" && tok[0] != "mixture"))
      raise(ErrorKind::ParseError, ctx + ": expected 'preset <name> ...' or 'mixture <name> ...'");
    const auto taken = t.names();
    if (std::find(taken.begin(), taken.end(), tok[1]) != taken.end())
      raise(ErrorKind::ParseError, ctx + ": duplicate name '" + tok[1] + "'");
    Preset p;
    p.name = tok[1];
    Mixture m;
    m.name = tok[1];
    for (std::size_t i = 2; i < tok.size(); ++i) {
      const auto eq = tok[i].find('=');
      if (eq == std::string::npos) raise(ErrorKind::ParseError, ctx + ": expected key=value, got '" + tok[i] + "'");
      const std::string k = tok[i].substr(0, eq), v = tok[i].substr(eq + 1);
      if (tok[0] == "mixture") {
        if (k == "real") m.real = v;
        else if (k == "sim") m.sim = v;
        else if (k == "alpha") m.alpha = parse_double(v, ctx);
        else raise(ErrorKind::ParseError, ctx + ": unknown mixture key '" + k + "'");
      } else if (k == "domain") {
        p.domain = v;
      } else if (k == "adversarial") {
        p.adversarial = parse_flag(v, ctx);
      } else if (k == "render") {
        try {
          p.mode = sim::parse_render_mode(v);
        } catch (const Error& e) {
          raise(ErrorKind::ParseError, ctx + ": " + e.what());
        }
      } else if (k == "n") {
        const long long n = parse_int(v, ctx);
        if (n < 1) raise(ErrorKind::ParseError, ctx + ": n must be >= 1");
        p.n = static_cast<std::size_t>(n);
      } else if (k == "images") {
        p.image_every = static_cast<int>(parse_int(v, ctx));
      } else if (k == "camera_scale") {
        p.camera_scale = parse_double(v, ctx);
      } else if (k == "background") {
        p.background = parse_double(v, ctx);
      } else if (k == "seed_offset") {
        p.seed_offset = static_cast<std::uint64_t>(parse_int(v, ctx));
      } else {
        raise(ErrorKind::ParseError, ctx + ": unknown preset key '" + k + "'");
      }
    }
    try {
      if (tok[0] == "preset") {
        p.validate();
        t.presets.push_back(p);
      } else {
        if (!(m.alpha >= 0 && m.alpha <= 1)) raise(ErrorKind::InvalidArgument, "alpha must be in [0, 1]");
        t.preset(m.real);
        t.preset(m.sim);
        t.mixtures.push_back(m);
      }
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::ParseError) throw;
      raise(ErrorKind::ParseError, ctx + ": " + e.what());
    }
  }
  return t;
}

PresetTable load_presets(const std::string& path) { return parse_presets(read_text_file(path), path); }

const PresetTable& default_presets() {
  static const PresetTable t = parse_presets(kDefaultPresets, "built-in presets");
  return t;
}

}  // namespace s2r::presets
