#include "cryoscope/config.hpp"

#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <json.hpp>
#include <limits>
#include <sstream>

#include "cryoscope/errors.hpp"
#include "cryoscope/io.hpp"

namespace cryoscope {
namespace {

using nlohmann::json;
using ordered = nlohmann::ordered_json;

// Read-only view of a JSON value that knows where it sits in the document.
class Node {
 public:
  Node(const json& value, std::string path) : v_(&value), path_(std::move(path)) {}

  const json& raw() const { return *v_; }
  const std::string& path() const { return path_; }

  [[noreturn]] void fail(const std::string& message) const { throw SchemaError(path_, message); }

  // Object with only the listed keys.
  const Node& object(std::initializer_list<std::string_view> allowed) const {
    if (!v_->is_object()) fail("expected an object");
    for (const auto& [key, _] : v_->items()) {
      if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
        throw SchemaError(child_path(key), "unknown key");
      }
    }
    return *this;
  }

  bool has(std::string_view key) const { return v_->is_object() && v_->contains(key); }

  Node at(std::string_view key) const {
    if (!has(key)) throw SchemaError(child_path(key), "required key is missing");
    return Node(v_->at(std::string(key)), child_path(key));
  }

  std::optional<Node> find(std::string_view key) const {
    if (!has(key) || v_->at(std::string(key)).is_null()) return std::nullopt;
    return at(key);
  }

  std::size_t size() const {
    if (!v_->is_array()) fail("expected an array");
    return v_->size();
  }

  Node operator[](std::size_t i) const {
    if (!v_->is_array()) fail("expected an array");
    return Node(v_->at(i), path_ + "[" + std::to_string(i) + "]");
  }

  double number() const {
    if (!v_->is_number()) fail("expected a number");
    const double d = v_->get<double>();
    if (!std::isfinite(d)) fail("expected a finite number");
    return d;
  }

  long long integer() const {
    if (!v_->is_number_integer()) fail("expected an integer");
    return v_->get<long long>();
  }

  std::string string() const {
    if (!v_->is_string()) fail("expected a string");
    return v_->get<std::string>();
  }

  bool boolean() const {
    if (!v_->is_boolean()) fail("expected true or false");
    return v_->get<bool>();
  }

  std::vector<double> numbers() const {
    std::vector<double> out(size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = (*this)[i].number();
    return out;
  }

  std::string child_path(std::string_view key) const {
    return path_.empty() ? std::string(key) : path_ + "." + std::string(key);
  }

 private:
  const json* v_;
  std::string path_;
};

double positive(const Node& n) {
  const double v = n.number();
  if (!(v > 0.0)) n.fail("must be positive");
  return v;
}

double non_negative(const Node& n) {
  const double v = n.number();
  if (!(v >= 0.0)) n.fail("must be non-negative");
  return v;
}

std::uint64_t seed_of(const Node& n) {
  if (!n.raw().is_number_unsigned() && !(n.raw().is_number_integer() && n.raw().get<long long>() >= 0)) {
    n.fail("expected a non-negative integer");
  }
  return n.raw().get<std::uint64_t>();
}

int bounded_int(const Node& n, long long lo, long long hi) {
  const long long v = n.integer();
  if (v < lo || v > hi) {
    std::ostringstream os;
    os << "must lie in [" << lo << ", " << hi << "]";
    n.fail(os.str());
  }
  return static_cast<int>(v);
}

TimeWindow window_of(const Node& n) {
  if (n.size() != 2) n.fail("expected [t_min_ns, t_max_ns]");
  TimeWindow w{n[0].number(), n[1].number()};
  if (!(w.t_max_ns > w.t_min_ns)) n.fail("window must have t_max_ns > t_min_ns");
  return w;
}

// Rethrows library validation errors at the node's path.
template <class F>
auto checked(const Node& n, F&& f) {
  try {
    return f();
  } catch (const SchemaError&) {
    throw;
  } catch (const Error& e) {
    n.fail(e.what());
  }
}

Waveform samples_of(const Node& n, const std::filesystem::path& base) {
  n.object({"file", "rate_per_ns", "t0_ns", "samples", "scale"});
  Waveform wf;
  if (n.has("file")) {
    if (n.has("samples") || n.has("rate_per_ns")) n.fail("give either a file or inline samples");
    const auto path = base / n.at("file").string();
    wf = checked(n.at("file"), [&] { return load_waveform_csv(path); });
  } else {
    wf.samples = n.at("samples").numbers();
    wf.sample_rate = positive(n.at("rate_per_ns"));
    if (auto t0 = n.find("t0_ns")) wf.t0 = t0->number();
  }
  if (auto s = n.find("scale")) {
    const double k = s->number();
    for (double& v : wf.samples) v *= k;
  }
  checked(n, [&] {
    validate(wf);
    return 0;
  });
  return wf;
}

FluxModel flux_model_of(const Node& n) {
  const auto type = n.at("type").string();
  if (type == "power_law") {
    n.object({"type", "a_ghz", "k"});
    PowerLawModel m{positive(n.at("a_ghz")), n.has("k") ? bounded_int(n.at("k"), 1, 16) : 2};
    return m;
  }
  if (type == "transmon") {
    n.object({"type", "ej_ghz", "ec_ghz", "f_max_ghz", "ej_over_ec"});
    if (n.has("f_max_ghz")) {
      if (n.has("ej_ghz") || n.has("ec_ghz")) n.fail("give either ej_ghz/ec_ghz or f_max_ghz/ej_over_ec");
      const double f = positive(n.at("f_max_ghz"));
      const double r = positive(n.at("ej_over_ec"));
      return checked(n, [&] { return transmon_from_fmax(f, r); });
    }
    return TransmonParams{positive(n.at("ej_ghz")), positive(n.at("ec_ghz"))};
  }
  n.at("type").fail("unknown flux model type '" + type + "'");
}

DephasingParams dephasing_of(const Node& n) {
  n.object({"gamma0_per_us", "gamma1_phi0", "alpha_exp"});
  DephasingParams d;
  if (auto g = n.find("gamma0_per_us")) d.gamma0 = non_negative(*g);
  if (auto g = n.find("gamma1_phi0")) d.gamma1 = non_negative(*g);
  if (auto a = n.find("alpha_exp")) d.alpha_exp = a->number();
  checked(n, [&] {
    validate(d);
    return 0;
  });
  return d;
}

void append_models(const Node& n, const std::filesystem::path& base, DistortionChain& chain) {
  const auto type = n.at("type").string();
  if (type == "exp_step") {
    n.object({"type", "A", "tau_ns", "g"});
    chain.models.emplace_back(ExpStep{n.at("A").number(), positive(n.at("tau_ns")), n.has("g") ? n.at("g").number() : 1.0});
  } else if (type == "high_pass") {
    n.object({"type", "tau_ns"});
    chain.models.emplace_back(HighPass{positive(n.at("tau_ns"))});
  } else if (type == "low_pass") {
    n.object({"type", "tau_ns"});
    chain.models.emplace_back(LowPass{positive(n.at("tau_ns"))});
  } else if (type == "skin_effect") {
    n.object({"type", "alpha_db"});
    chain.models.emplace_back(SkinEffect{non_negative(n.at("alpha_db"))});
  } else if (type == "measured_impulse") {
    n.object({"type", "impulse"});
    chain.models.emplace_back(MeasuredImpulse{samples_of(n.at("impulse"), base)});
  } else if (type == "awg_standin") {
    n.object({"type", "rate_per_ns", "rise_ns", "duration_ns"});
    const double rate = n.has("rate_per_ns") ? positive(n.at("rate_per_ns")) : 38.4;
    const double rise = n.has("rise_ns") ? positive(n.at("rise_ns")) : 0.5;
    const double dur = n.has("duration_ns") ? positive(n.at("duration_ns")) : 5.0;
    chain.models.emplace_back(checked(n, [&] { return synthetic_awg_response(rate, rise, dur); }));
  } else if (type == "typical_control_line") {
    n.object({"type"});
    for (auto& m : typical_control_line().models) chain.models.push_back(std::move(m));
  } else {
    n.at("type").fail("unknown distortion model '" + type + "'");
  }
}

DistortionChain chain_of(const Node& n, const std::filesystem::path& base) {
  DistortionChain c;
  for (std::size_t i = 0; i < n.size(); ++i) append_models(n[i], base, c);
  return c;
}

IirMode mode_of(const Node& n) {
  const auto s = n.string();
  if (s == "ideal") return IirMode::ideal;
  if (s == "hardware") return IirMode::hardware;
  n.fail("expected \"ideal\" or \"hardware\"");
}

FilterPipeline pipeline_of(const Node& n) {
  n.object({"mode", "iir", "fir"});
  const IirMode mode = n.has("mode") ? mode_of(n.at("mode")) : IirMode::ideal;
  FilterPipeline p;
  if (auto iir = n.find("iir")) {
    for (std::size_t i = 0; i < iir->size(); ++i) {
      const Node f = (*iir)[i];
      f.object({"A", "tau_ns", "mode"});
      IirExpSpec s{f.at("A").number(), positive(f.at("tau_ns")), f.has("mode") ? mode_of(f.at("mode")) : mode};
      checked(f, [&] { return iir_coefficients(s, kAwgSampleRate); });
      p.iir.push_back(s);
    }
  }
  if (auto fir = n.find("fir")) {
    fir->object({"params"});
    const auto params = fir->at("params").numbers();
    if (params.size() != kFirParamCount) {
      fir->at("params").fail("expected " + std::to_string(kFirParamCount) + " parameters, got " +
                              std::to_string(params.size()));
    }
    FirSpec s;
    std::copy(params.begin(), params.end(), s.params.begin());
    p.fir = s;
  }
  return p;
}

PulseSpec pulse_of(const Node& n, const std::filesystem::path& base) {
  const auto type = n.at("type").string();
  PulseSpec p;
  if (type == "step") {
    n.object({"type", "amplitude_phi0", "duration_ns"});
    p.kind = PulseSpec::Kind::step;
    p.amplitude_phi0 = n.at("amplitude_phi0").number();
    p.duration_ns = positive(n.at("duration_ns"));
  } else if (type == "skyline") {
    n.object({"type", "levels_phi0", "durations_ns"});
    p.kind = PulseSpec::Kind::skyline;
    p.levels_phi0 = n.at("levels_phi0").numbers();
    p.durations_ns = n.at("durations_ns").numbers();
    if (p.levels_phi0.empty() || p.levels_phi0.size() != p.durations_ns.size()) {
      n.fail("levels_phi0 and durations_ns must be non-empty and of equal length");
    }
    for (std::size_t i = 0; i < p.durations_ns.size(); ++i) {
      if (!(p.durations_ns[i] > 0.0)) n.at("durations_ns")[i].fail("must be positive");
    }
  } else if (type == "samples") {
    n.object({"type", "waveform"});
    p.kind = PulseSpec::Kind::samples;
    p.samples = samples_of(n.at("waveform"), base);
    if (p.samples.t0 != 0.0) n.at("waveform").fail("pulse must start at t = 0");
  } else {
    n.at("type").fail("unknown pulse type '" + type + "'");
  }
  return p;
}

ExperimentSection experiment_of(const Node& n, const std::filesystem::path& base) {
  n.object({"pulse", "t_min_ns", "t_max_ns", "t_sep_ns", "noise_sigma", "seed", "oversampling", "nominal_detuning_ghz"});
  ExperimentSection e;
  e.pulse = pulse_of(n.at("pulse"), base);
  if (auto v = n.find("t_min_ns")) e.t_min_ns = non_negative(*v);
  e.t_max_ns = positive(n.at("t_max_ns"));
  if (!(e.t_max_ns > e.t_min_ns)) n.at("t_max_ns").fail("must exceed t_min_ns");
  if (auto v = n.find("t_sep_ns")) {
    e.t_sep_ns = positive(*v);
    if (!(*e.t_sep_ns > e.t_max_ns)) v->fail("must exceed t_max_ns");
  }
  if (auto v = n.find("noise_sigma")) e.noise_sigma = non_negative(*v);
  if (auto v = n.find("seed")) e.seed = seed_of(*v);
  if (auto v = n.find("oversampling")) e.oversampling = bounded_int(*v, 4, 64);
  if (auto v = n.find("nominal_detuning_ghz")) e.nominal_detuning_ghz = positive(*v);
  return e;
}

ReconstructionSection reconstruction_of(const Node& n) {
  n.object({"sg_window", "sg_order", "nyquist_order", "demod_ghz", "range_policy", "negative_tolerance_ghz"});
  ReconstructionSection r;
  auto& c = r.config;
  if (auto v = n.find("sg_window")) {
    c.sg_window = bounded_int(*v, 3, 101);
    if (c.sg_window % 2 == 0) v->fail("must be odd");
  }
  if (auto v = n.find("sg_order")) {
    c.sg_order = bounded_int(*v, 1, 10);
    if (c.sg_order >= c.sg_window) v->fail("must be below sg_window");
  }
  if (auto v = n.find("nyquist_order")) {
    if (v->raw().is_string()) {
      if (v->string() != "auto") v->fail("expected a non-negative integer or \"auto\"");
      r.nyquist_auto = true;
    } else {
      c.nyquist_order = bounded_int(*v, 0, 100);
    }
  }
  if (auto v = n.find("demod_ghz")) {
    if (v->raw().is_string()) {
      if (v->string() != "auto") v->fail("expected a frequency or \"auto\"");
    } else {
      c.demod_ghz = v->number();
    }
  }
  if (auto v = n.find("range_policy")) {
    const auto s = v->string();
    if (s == "error") {
      c.range_policy = RangePolicy::error;
    } else if (s == "clip") {
      c.range_policy = RangePolicy::clip;
    } else {
      v->fail("expected \"error\" or \"clip\"");
    }
  }
  if (auto v = n.find("negative_tolerance_ghz")) c.negative_tolerance_ghz = non_negative(*v);
  return r;
}

CalibrationSection calibration_of(const Node& n, const std::filesystem::path& base) {
  n.object({"n_filters", "iir_window_ns", "verify_window_ns", "normalize_window_ns", "fir_window_ns", "flat_until_ns",
            "flat_weight", "cmaes_budget", "cmaes_sigma0", "cmaes_seed", "cmaes_lambda", "target", "max_iterations",
            "mode", "amplitude_phi0", "t_max_ns", "noise_sigma", "seed", "averages", "sg_window", "sg_order",
            "plant_step"});
  CalibrationSection c;
  auto& o = c.options;
  auto& m = c.measurement;
  if (auto v = n.find("n_filters")) o.n_filters = bounded_int(*v, 1, 8);
  if (auto v = n.find("iir_window_ns")) o.iir_window = window_of(*v);
  if (auto v = n.find("verify_window_ns")) o.verify_window = window_of(*v);
  if (auto v = n.find("normalize_window_ns")) m.normalize = window_of(*v);
  if (auto v = n.find("fir_window_ns")) o.fir.window_ns = positive(*v);
  if (auto v = n.find("flat_until_ns")) o.fir.flat_until_ns = positive(*v);
  if (auto v = n.find("flat_weight")) o.fir.flat_weight = non_negative(*v);
  if (auto v = n.find("cmaes_budget")) o.cmaes.budget = static_cast<std::size_t>(bounded_int(*v, 1000, 100000000));
  if (auto v = n.find("cmaes_sigma0")) o.cmaes.sigma0 = positive(*v);
  if (auto v = n.find("cmaes_seed")) o.cmaes.seed = seed_of(*v);
  if (auto v = n.find("cmaes_lambda")) o.cmaes.lambda = static_cast<std::size_t>(bounded_int(*v, 2, 100000));
  if (auto v = n.find("target")) o.target = positive(*v);
  if (auto v = n.find("max_iterations")) o.max_iterations = bounded_int(*v, 1, 100);
  if (auto v = n.find("mode")) o.mode = mode_of(*v);
  if (auto v = n.find("amplitude_phi0")) m.amplitude_phi0 = positive(*v);
  if (auto v = n.find("t_max_ns")) m.t_max_ns = positive(*v);
  if (auto v = n.find("noise_sigma")) m.noise_sigma = non_negative(*v);
  if (auto v = n.find("seed")) m.seed = seed_of(*v);
  if (auto v = n.find("averages")) m.averages = bounded_int(*v, 1, 1000000);
  if (auto v = n.find("sg_window")) {
    m.sg_window = bounded_int(*v, 3, 101);
    if (m.sg_window % 2 == 0) v->fail("must be odd");
  }
  if (auto v = n.find("sg_order")) m.sg_order = bounded_int(*v, 1, 10);
  if (auto v = n.find("plant_step")) c.plant_step = samples_of(*v, base);
  if (!(m.t_max_ns > std::max({o.iir_window.t_max_ns, o.verify_window.t_max_ns, m.normalize.t_max_ns}))) {
    n.fail("t_max_ns must exceed every calibration window");
  }
  return c;
}

SnrSection snr_of(const Node& n) {
  n.object({"amplitudes_phi0", "windows_ns", "n_trials", "noise_sigma", "seed"});
  SnrSection s;
  s.amplitudes_phi0 = n.at("amplitudes_phi0").numbers();
  for (std::size_t i = 0; i < s.amplitudes_phi0.size(); ++i) {
    if (!(s.amplitudes_phi0[i] > 0.0)) n.at("amplitudes_phi0")[i].fail("must be positive");
  }
  const Node w = n.at("windows_ns");
  for (std::size_t i = 0; i < w.size(); ++i) s.windows.push_back(window_of(w[i]));
  if (s.amplitudes_phi0.empty() || s.windows.empty()) n.fail("needs at least one amplitude and one window");
  if (auto v = n.find("n_trials")) s.n_trials = static_cast<std::size_t>(bounded_int(*v, 2, 1000000));
  if (auto v = n.find("noise_sigma")) s.noise_sigma = non_negative(*v);
  if (auto v = n.find("seed")) s.seed = seed_of(*v);
  return s;
}

// Serialisation ---------------------------------------------------------

ordered waveform_json(const Waveform& wf) {
  ordered j;
  j["rate_per_ns"] = wf.sample_rate;
  if (wf.t0 != 0.0) j["t0_ns"] = wf.t0;
  j["samples"] = wf.samples;
  return j;
}

ordered flux_model_json(const FluxModel& m) {
  ordered j;
  if (const auto* p = std::get_if<PowerLawModel>(&m)) {
    j["type"] = "power_law";
    j["a_ghz"] = p->a;
    j["k"] = p->k;
  } else {
    const auto& t = std::get<TransmonParams>(m);
    j["type"] = "transmon";
    j["ej_ghz"] = t.ej;
    j["ec_ghz"] = t.ec;
  }
  return j;
}

ordered chain_json(const DistortionChain& c) {
  ordered arr = ordered::array();
  for (const auto& m : c.models) {
    ordered j;
    if (const auto* e = std::get_if<ExpStep>(&m)) {
      j["type"] = "exp_step";
      j["A"] = e->A;
      j["tau_ns"] = e->tau_ns;
      j["g"] = e->g;
    } else if (const auto* h = std::get_if<HighPass>(&m)) {
      j["type"] = "high_pass";
      j["tau_ns"] = h->tau_ns;
    } else if (const auto* l = std::get_if<LowPass>(&m)) {
      j["type"] = "low_pass";
      j["tau_ns"] = l->tau_ns;
    } else if (const auto* s = std::get_if<SkinEffect>(&m)) {
      j["type"] = "skin_effect";
      j["alpha_db"] = s->alpha_db;
    } else {
      j["type"] = "measured_impulse";
      j["impulse"] = waveform_json(std::get<MeasuredImpulse>(m).impulse);
    }
    arr.push_back(j);
  }
  return arr;
}

const char* mode_name(IirMode m) { return m == IirMode::hardware ? "hardware" : "ideal"; }

ordered pipeline_json(const FilterPipeline& p) {
  ordered j;
  ordered iir = ordered::array();
  for (const auto& f : p.iir) iir.push_back(ordered{{"A", f.A}, {"tau_ns", f.tau_ns}, {"mode", mode_name(f.mode)}});
  j["iir"] = iir;
  if (p.fir) j["fir"] = ordered{{"params", std::vector<double>(p.fir->params.begin(), p.fir->params.end())}};
  return j;
}

ordered window_json(TimeWindow w) { return ordered::array({w.t_min_ns, w.t_max_ns}); }

ordered pulse_json(const PulseSpec& p) {
  ordered j;
  switch (p.kind) {
    case PulseSpec::Kind::step:
      j["type"] = "step";
      j["amplitude_phi0"] = p.amplitude_phi0;
      j["duration_ns"] = p.duration_ns;
      break;
    case PulseSpec::Kind::skyline:
      j["type"] = "skyline";
      j["levels_phi0"] = p.levels_phi0;
      j["durations_ns"] = p.durations_ns;
      break;
    case PulseSpec::Kind::samples:
      j["type"] = "samples";
      j["waveform"] = waveform_json(p.samples);
      break;
  }
  return j;
}

ordered document_json(const ConfigDocument& d) {
  ordered j;
  j["flux_model"] = flux_model_json(d.flux_model);
  if (d.dephasing) {
    j["dephasing"] = ordered{{"gamma0_per_us", d.dephasing->gamma0},
                             {"gamma1_phi0", d.dephasing->gamma1},
                             {"alpha_exp", d.dephasing->alpha_exp}};
  }
  j["chain"] = chain_json(d.chain);
  j["pipeline"] = pipeline_json(d.pipeline);
  if (d.experiment) {
    const auto& e = *d.experiment;
    ordered x;
    x["pulse"] = pulse_json(e.pulse);
    x["t_min_ns"] = e.t_min_ns;
    x["t_max_ns"] = e.t_max_ns;
    if (e.t_sep_ns) x["t_sep_ns"] = *e.t_sep_ns;
    x["noise_sigma"] = e.noise_sigma;
    x["seed"] = e.seed;
    x["oversampling"] = e.oversampling;
    if (e.nominal_detuning_ghz) x["nominal_detuning_ghz"] = *e.nominal_detuning_ghz;
    j["experiment"] = x;
  }
  {
    const auto& r = d.reconstruction;
    ordered x;
    x["sg_window"] = r.config.sg_window;
    x["sg_order"] = r.config.sg_order;
    if (r.nyquist_auto) {
      x["nyquist_order"] = "auto";
    } else {
      x["nyquist_order"] = r.config.nyquist_order;
    }
    if (r.config.demod_ghz) {
      x["demod_ghz"] = *r.config.demod_ghz;
    } else {
      x["demod_ghz"] = "auto";
    }
    x["range_policy"] = r.config.range_policy == RangePolicy::clip ? "clip" : "error";
    x["negative_tolerance_ghz"] = r.config.negative_tolerance_ghz;
    j["reconstruction"] = x;
  }
  {
    const auto& o = d.calibration.options;
    const auto& m = d.calibration.measurement;
    ordered x;
    x["n_filters"] = o.n_filters;
    x["iir_window_ns"] = window_json(o.iir_window);
    x["verify_window_ns"] = window_json(o.verify_window);
    x["normalize_window_ns"] = window_json(m.normalize);
    x["fir_window_ns"] = o.fir.window_ns;
    x["flat_until_ns"] = o.fir.flat_until_ns;
    x["flat_weight"] = o.fir.flat_weight;
    x["cmaes_budget"] = o.cmaes.budget;
    x["cmaes_sigma0"] = o.cmaes.sigma0;
    x["cmaes_seed"] = o.cmaes.seed;
    if (o.cmaes.lambda) x["cmaes_lambda"] = *o.cmaes.lambda;
    x["target"] = o.target;
    x["max_iterations"] = o.max_iterations;
    x["mode"] = mode_name(o.mode);
    x["amplitude_phi0"] = m.amplitude_phi0;
    x["t_max_ns"] = m.t_max_ns;
    x["noise_sigma"] = m.noise_sigma;
    x["seed"] = m.seed;
    x["averages"] = m.averages;
    x["sg_window"] = m.sg_window;
    x["sg_order"] = m.sg_order;
    if (d.calibration.plant_step) x["plant_step"] = waveform_json(*d.calibration.plant_step);
    j["calibration"] = x;
  }
  if (d.snr) {
    ordered x;
    x["amplitudes_phi0"] = d.snr->amplitudes_phi0;
    ordered w = ordered::array();
    for (const auto& win : d.snr->windows) w.push_back(window_json(win));
    x["windows_ns"] = w;
    x["n_trials"] = d.snr->n_trials;
    x["noise_sigma"] = d.snr->noise_sigma;
    x["seed"] = d.snr->seed;
    j["snr"] = x;
  }
  return j;
}

ConfigDocument document_of(const json& root, const std::filesystem::path& base) {
  const Node n(root, "");
  n.object({"flux_model", "dephasing", "chain", "pipeline", "experiment", "reconstruction", "calibration", "snr"});
  ConfigDocument d;
  if (auto v = n.find("flux_model")) d.flux_model = flux_model_of(*v);
  checked(n.has("flux_model") ? n.at("flux_model") : n, [&] { return validate(d.flux_model); });
  if (auto v = n.find("dephasing")) d.dephasing = dephasing_of(*v);
  if (auto v = n.find("chain")) d.chain = chain_of(*v, base);
  if (auto v = n.find("pipeline")) d.pipeline = pipeline_of(*v);
  if (auto v = n.find("experiment")) d.experiment = experiment_of(*v, base);
  if (auto v = n.find("reconstruction")) d.reconstruction = reconstruction_of(*v);
  d.reconstruction.config.flux_model = d.flux_model;
  if (auto v = n.find("calibration")) d.calibration = calibration_of(*v, base);
  d.calibration.measurement.flux_model = d.flux_model;
  if (auto v = n.find("snr")) d.snr = snr_of(*v);
  return d;
}

json parse_json(std::string_view text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw SchemaError("", std::string("invalid JSON: ") + e.what());
  }
}

ordered record_json(const IterationRecord& r) {
  ordered j;
  j["stage"] = r.stage;
  j["pipeline"] = pipeline_json(r.pipeline);
  j["predicted"] = r.predicted;
  j["verified"] = r.verified;
  j["window_ns"] = window_json(r.window);
  j["evaluations"] = r.evaluations;
  j["fit_converged"] = r.fit_converged;
  j["history"] = r.history;
  if (r.measured) j["measured"] = waveform_json(*r.measured);
  return j;
}

IterationRecord record_of(const Node& n) {
  n.object({"stage", "pipeline", "predicted", "verified", "window_ns", "evaluations", "fit_converged", "history",
            "measured"});
  IterationRecord r;
  r.stage = n.at("stage").string();
  r.pipeline = pipeline_of(n.at("pipeline"));
  r.predicted = n.at("predicted").number();
  r.verified = n.at("verified").number();
  r.window = window_of(n.at("window_ns"));
  r.evaluations = static_cast<std::size_t>(n.at("evaluations").integer());
  r.fit_converged = n.at("fit_converged").boolean();
  r.history = n.at("history").numbers();
  if (auto m = n.find("measured")) r.measured = samples_of(*m, ".");
  return r;
}

}  // namespace

Waveform make_skyline(const std::vector<double>& levels_phi0, const std::vector<double>& durations_ns,
                      double sample_rate) {
  if (levels_phi0.empty() || levels_phi0.size() != durations_ns.size()) {
    throw ConfigError("skyline needs one duration per level");
  }
  Waveform wf{{}, sample_rate, 0.0};
  for (std::size_t i = 0; i < levels_phi0.size(); ++i) {
    const auto n = static_cast<std::size_t>(std::llround(durations_ns[i] * sample_rate));
    if (n == 0) throw ConfigError("skyline segment shorter than one sample");
    wf.samples.insert(wf.samples.end(), n, levels_phi0[i]);
  }
  return wf;
}

Waveform build_pulse(const PulseSpec& spec) {
  switch (spec.kind) {
    case PulseSpec::Kind::step:
      return make_step(spec.amplitude_phi0, spec.duration_ns);
    case PulseSpec::Kind::skyline:
      return make_skyline(spec.levels_phi0, spec.durations_ns);
    case PulseSpec::Kind::samples:
      return spec.samples;
  }
  throw ConfigError("unknown pulse kind");
}

ConfigDocument parse_config(std::string_view json_text, const std::filesystem::path& base_dir) {
  return document_of(parse_json(json_text), base_dir);
}

ConfigDocument load_config(const std::filesystem::path& path) {
  return parse_config(read_file(path), path.has_parent_path() ? path.parent_path() : std::filesystem::path("."));
}

std::string to_json(const ConfigDocument& doc) { return document_json(doc).dump(2); }

std::string pipeline_to_json(const FilterPipeline& pipeline) { return pipeline_json(pipeline).dump(2); }

FilterPipeline pipeline_from_json(std::string_view json_text) {
  const auto j = parse_json(json_text);
  return pipeline_of(Node(j, "pipeline"));
}

ExperimentConfig build_experiment(const ConfigDocument& doc) {
  if (!doc.experiment) throw SchemaError("experiment", "section is required for this command");
  const auto& e = *doc.experiment;
  ExperimentConfig cfg;
  cfg.pulse = build_pulse(e.pulse);
  const double rate = cfg.pulse.sample_rate;
  const auto first = static_cast<std::size_t>(std::ceil(e.t_min_ns * rate - 1e-9));
  const auto last = static_cast<std::size_t>(std::floor(e.t_max_ns * rate + 1e-9));
  cfg.truncations = truncation_grid(last - first + 1, rate, first);
  cfg.t_sep_ns = e.t_sep_ns ? *e.t_sep_ns : cfg.truncations.back() + 100.0;
  cfg.noise_sigma = e.noise_sigma;
  cfg.seed = e.seed;
  cfg.dephasing = doc.dephasing;
  cfg.flux_model = doc.flux_model;
  cfg.chain = doc.chain;
  cfg.predistortion = doc.pipeline;
  cfg.oversampling = e.oversampling;
  if (e.nominal_detuning_ghz) {
    const auto flux = on_chip_flux(cfg, *cfg.t_sep_ns);
    double peak = 0.0;
    for (double v : flux.samples) peak = std::max(peak, std::abs(v));
    if (!(peak > 0.0)) throw SchemaError("experiment.nominal_detuning_ghz", "pulse has no amplitude to scale");
    const double target = flux_from_detuning(doc.flux_model, *e.nominal_detuning_ghz);
    for (double& v : cfg.pulse.samples) v *= target / peak;
  }
  return cfg;
}

ReconstructionConfig build_reconstruction(const ConfigDocument& doc) {
  auto rc = doc.reconstruction.config;
  rc.flux_model = doc.flux_model;
  return rc;
}

CalibrationSession build_session(const ConfigDocument& doc) {
  CalibrationSession s;
  if (doc.calibration.plant_step) {
    s.plant = *doc.calibration.plant_step;
  } else {
    s.plant = doc.chain;
  }
  s.measurement = doc.calibration.measurement;
  s.measurement.flux_model = doc.flux_model;
  s.options = doc.calibration.options;
  return s;
}

std::string session_to_json(const CalibrationSession& session, const ConfigDocument& doc) {
  ordered j;
  j["config"] = document_json(doc);
  j["converged"] = session.converged;
  j["pipeline"] = pipeline_json(session.pipeline);
  ordered log = ordered::array();
  for (const auto& r : session.log) log.push_back(record_json(r));
  j["log"] = log;
  return j.dump(2);
}

CalibrationSession session_from_json(std::string_view json_text) {
  const auto j = parse_json(json_text);
  const Node n(j, "");
  n.object({"config", "converged", "pipeline", "log"});
  const auto doc = document_of(j.at("config"), ".");
  auto s = build_session(doc);
  s.converged = n.at("converged").boolean();
  s.pipeline = pipeline_of(n.at("pipeline"));
  const Node log = n.at("log");
  for (std::size_t i = 0; i < log.size(); ++i) s.log.push_back(record_of(log[i]));
  return s;
}

ConfigDocument session_config(std::string_view json_text) {
  const auto j = parse_json(json_text);
  if (!j.is_object() || !j.contains("config")) throw SchemaError("config", "session file has no config");
  return document_of(j.at("config"), ".");
}

}  // namespace cryoscope
