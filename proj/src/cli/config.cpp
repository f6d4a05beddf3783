#include "pfnlab/config.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

namespace pfnlab {
namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

[[noreturn]] void fail(const std::string& source, std::size_t line, const std::string& field,
                       const std::string& message) {
  std::ostringstream msg;
  msg << source;
  if (line) msg << ":" << line;
  if (!field.empty()) msg << ": " << field;
  msg << ": " << message;
  throw ConfigError(msg.str(), line, field);
}

// Accepts plain decimals plus "pi" multiples such as "pi", "-pi", "0.5pi".
bool parse_number(const std::string& text, double& out) {
  std::string t = lower(trim(text));
  if (t.empty()) return false;
  double scale = 1.0;
  if (t.size() >= 2 && t.compare(t.size() - 2, 2, "pi") == 0) {
    scale = std::numbers::pi;
    t = trim(t.substr(0, t.size() - 2));
    if (t.empty() || t == "+") t = "1";
    if (t == "-") t = "-1";
  }
  char* end = nullptr;
  const double v = std::strtod(t.c_str(), &end);
  if (end == t.c_str() || *end != '\0' || !std::isfinite(v)) return false;
  out = v * scale;
  return true;
}

std::vector<std::string> split_list(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) out.push_back(trim(item));
  return out;
}

}  // namespace

const IniEntry* IniSection::find(const std::string& key) const {
  const IniEntry* hit = nullptr;
  for (const auto& e : entries) {
    if (e.key == key) hit = &e;
  }
  return hit;
}

std::string IniSection::text(const std::string& key) const {
  const IniEntry* e = find(key);
  if (!e) fail("[" + name + "]", line, key, "missing required key");
  return e->value;
}

std::string IniSection::text(const std::string& key, const std::string& fallback) const {
  const IniEntry* e = find(key);
  return e ? e->value : fallback;
}

double IniSection::number(const std::string& key) const {
  const IniEntry* e = find(key);
  if (!e) fail("[" + name + "]", line, key, "missing required key");
  double v = 0.0;
  if (!parse_number(e->value, v)) fail("[" + name + "]", e->line, key, "expected a number");
  return v;
}

double IniSection::number(const std::string& key, double fallback) const {
  return has(key) ? number(key) : fallback;
}

std::uint64_t IniSection::integer(const std::string& key) const {
  const IniEntry* e = find(key);
  if (!e) fail("[" + name + "]", line, key, "missing required key");
  const std::string t = trim(e->value);
  std::uint64_t v = 0;
  std::size_t used = 0;
  try {
    if (t.empty() || t[0] == '-') throw std::invalid_argument("negative");
    v = std::stoull(t, &used, 0);
  } catch (const std::exception&) {
    fail("[" + name + "]", e->line, key, "expected a non-negative integer");
  }
  if (used != t.size()) fail("[" + name + "]", e->line, key, "expected a non-negative integer");
  return v;
}

std::uint64_t IniSection::integer(const std::string& key, std::uint64_t fallback) const {
  return has(key) ? integer(key) : fallback;
}

bool IniSection::flag(const std::string& key, bool fallback) const {
  const IniEntry* e = find(key);
  if (!e) return fallback;
  const std::string v = lower(trim(e->value));
  if (v == "true" || v == "yes" || v == "1" || v == "on") return true;
  if (v == "false" || v == "no" || v == "0" || v == "off") return false;
  fail("[" + name + "]", e->line, key, "expected true or false");
}

std::vector<double> IniSection::numbers(const std::string& key) const {
  const IniEntry* e = find(key);
  if (!e) fail("[" + name + "]", line, key, "missing required key");
  std::vector<double> out;
  if (trim(e->value).empty()) return out;
  for (const auto& item : split_list(e->value, ',')) {
    double v = 0.0;
    if (!parse_number(item, v)) {
      fail("[" + name + "]", e->line, key, "expected comma-separated numbers, got '" + item + "'");
    }
    out.push_back(v);
  }
  return out;
}

std::vector<std::size_t> IniSection::integers(const std::string& key) const {
  std::vector<std::size_t> out;
  const IniEntry* e = find(key);
  for (double v : numbers(key)) {
    if (v < 0.0 || v != std::floor(v)) {
      fail("[" + name + "]", e->line, key, "expected comma-separated non-negative integers");
    }
    out.push_back(static_cast<std::size_t>(v));
  }
  return out;
}

void IniSection::allow_only(std::initializer_list<const char*> keys) const {
  for (const auto& e : entries) {
    const bool known = std::any_of(keys.begin(), keys.end(),
                                   [&](const char* k) { return e.key == k; });
    if (!known) fail("[" + name + "]", e.line, e.key, "unknown key");
  }
}

const IniSection* IniDocument::section(const std::string& name) const {
  for (const auto& s : sections) {
    if (s.name == name) return &s;
  }
  return nullptr;
}

const IniSection& IniDocument::require(const std::string& name) const {
  const IniSection* s = section(name);
  if (!s) fail(source, 0, "[" + name + "]", "missing required section");
  return *s;
}

std::vector<const IniSection*> IniDocument::all(const std::string& name) const {
  std::vector<const IniSection*> out;
  for (const auto& s : sections) {
    if (s.name == name) out.push_back(&s);
  }
  return out;
}

IniDocument parse_ini(const std::string& text, const std::string& source) {
  IniDocument doc;
  doc.source = source;
  std::istringstream in(text);
  std::string raw;
  std::size_t lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    const std::string line = trim(raw);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3) fail(source, lineno, "", "malformed section header");
      doc.sections.push_back({lower(trim(line.substr(1, line.size() - 2))), lineno, {}});
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail(source, lineno, "", "expected 'key = value'");
    if (doc.sections.empty()) fail(source, lineno, "", "key outside of any section");
    const std::string key = lower(trim(line.substr(0, eq)));
    if (key.empty()) fail(source, lineno, "", "empty key");
    auto& sec = doc.sections.back();
    for (const auto& e : sec.entries) {
      if (e.key == key) fail(source, lineno, key, "duplicate key in section [" + sec.name + "]");
    }
    sec.entries.push_back({key, trim(line.substr(eq + 1)), lineno});
  }
  return doc;
}

IniDocument load_ini(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file: " + path.string(), 0, "");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_ini(ss.str(), path.string());
}

// Experiment parsing --------------------------------------------------------------

namespace {

std::vector<double> broadcast(const IniSection& s, const std::string& key, std::size_t dim) {
  auto v = s.numbers(key);
  if (v.size() == 1 && dim > 1) v.assign(dim, v[0]);
  if (v.size() != dim) {
    fail("[" + s.name + "]", s.find(key)->line, key,
         "expected 1 or " + std::to_string(dim) + " values");
  }
  return v;
}

}  // namespace

ConditionalModel parse_model(const IniSection& s, std::size_t dim) {
  const std::string type = lower(s.text("type"));
  ConditionalModel model;
  if (type == "constant") {
    model = ConstantBernoulli{s.number("p1")};
  } else if (type == "logistic") {
    model = Logistic{broadcast(s, "weights", dim), s.number("offset", 0.0)};
  } else if (type == "sine") {
    model = SineTask{s.number("amplitude", 1.0), broadcast(s, "frequency", dim),
                     s.number("phase", 0.0)};
  } else {
    fail("[" + s.name + "]", s.find("type")->line, "type",
         "unknown model type '" + type + "' (constant, logistic, sine)");
  }
  try {
    validate(model);
  } catch (const std::invalid_argument& e) {
    fail("[" + s.name + "]", s.line, "", e.what());
  }
  return model;
}

FeatureLaw parse_feature_law(const IniSection& s) {
  const std::string law = lower(s.text("law", "normal"));
  FeatureLaw out;
  if (law == "normal") {
    out = StandardNormal{static_cast<std::size_t>(s.integer("dim"))};
  } else if (law == "uniform") {
    out = UniformBox{static_cast<std::size_t>(s.integer("dim")), s.number("lo", -1.0),
                     s.number("hi", 1.0)};
  } else if (law == "atoms") {
    DiscreteAtoms atoms;
    for (const auto& item : split_list(s.text("atoms"), '|')) {
      IniSection tmp{s.name, s.line, {{"atom", item, s.find("atoms")->line}}};
      atoms.atoms.push_back(tmp.numbers("atom"));
    }
    atoms.probs = s.numbers("probs");
    out = atoms;
  } else {
    fail("[" + s.name + "]", s.find("law")->line, "law",
         "unknown feature law '" + law + "' (normal, uniform, atoms)");
  }
  try {
    validate(out);
  } catch (const std::invalid_argument& e) {
    fail("[" + s.name + "]", s.line, "", e.what());
  }
  return out;
}

const char* to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::Pretrain: return "pretrain";
    case ExperimentKind::BiasVariance: return "bias-variance";
    case ExperimentKind::Probe: return "probe";
    case ExperimentKind::PpdCheck: return "ppd-check";
  }
  return "?";
}

const char* to_string(ProbeKind kind) {
  switch (kind) {
    case ProbeKind::Sensitivity: return "sensitivity";
    case ProbeKind::Locality: return "locality";
    case ProbeKind::Tilt: return "tilt";
    case ProbeKind::Symmetry: return "symmetry";
  }
  return "?";
}

ExperimentConfig parse_experiment(const IniDocument& doc) {
  ExperimentConfig cfg;
  static const char* const kSections[] = {"experiment", "features", "size_prior", "model",
                                          "truth", "tilde", "predictor", "pretrain",
                                          "window", "tree", "sgd"};
  for (const auto& s : doc.sections) {
    if (std::find_if(std::begin(kSections), std::end(kSections),
                     [&](const char* k) { return s.name == k; }) == std::end(kSections)) {
      fail(doc.source, s.line, "[" + s.name + "]", "unknown section");
    }
    if (s.name != "model" && doc.all(s.name).front() != &s) {
      fail(doc.source, s.line, "[" + s.name + "]", "section may appear only once");
    }
  }

  const IniSection& ex = doc.require("experiment");
  ex.allow_only({"kind", "probe", "family", "seed", "workers", "output", "n_grid", "replicates",
                 "test_points", "trials", "mc_draws", "mc_samples", "symmetry_n",
                 "permutation_samples", "test_point", "epsilon_rule", "epsilon"});
  const std::string kind = lower(ex.text("kind"));
  if (kind == "pretrain") cfg.kind = ExperimentKind::Pretrain;
  else if (kind == "bias-variance") cfg.kind = ExperimentKind::BiasVariance;
  else if (kind == "probe") cfg.kind = ExperimentKind::Probe;
  else if (kind == "ppd-check") cfg.kind = ExperimentKind::PpdCheck;
  else fail(doc.source, ex.find("kind")->line, "kind",
            "unknown experiment kind '" + kind + "' (pretrain, bias-variance, probe, ppd-check)");
  if (cfg.kind == ExperimentKind::Probe) {
    const std::string probe = lower(ex.text("probe"));
    if (probe == "sensitivity") cfg.probe = ProbeKind::Sensitivity;
    else if (probe == "locality") cfg.probe = ProbeKind::Locality;
    else if (probe == "tilt") cfg.probe = ProbeKind::Tilt;
    else if (probe == "symmetry") cfg.probe = ProbeKind::Symmetry;
    else fail(doc.source, ex.find("probe")->line, "probe",
              "unknown probe '" + probe + "' (sensitivity, locality, tilt, symmetry)");
  }
  if (!ex.has("seed")) fail(doc.source, ex.line, "seed", "a seed is required");
  cfg.seed = ex.integer("seed");
  cfg.workers = ex.integer("workers", 0);
  cfg.family = lower(ex.text("family", "transformer"));
  cfg.output_dir = ex.text("output", "out");
  if (ex.has("n_grid")) cfg.n_grid = ex.integers("n_grid");
  cfg.replicates = ex.integer("replicates", cfg.replicates);
  cfg.test_points = ex.integer("test_points", cfg.test_points);
  cfg.trials = ex.integer("trials", cfg.trials);
  cfg.mc_draws = ex.integer("mc_draws", cfg.mc_draws);
  cfg.mc_samples = ex.integer("mc_samples", cfg.mc_samples);
  cfg.symmetry_n = ex.integer("symmetry_n", cfg.symmetry_n);
  cfg.permutation_samples = ex.integer("permutation_samples", cfg.permutation_samples);
  if (ex.has("test_point")) cfg.test_point = ex.numbers("test_point");
  const std::string rule = lower(ex.text("epsilon_rule", "knn"));
  if (rule == "knn") cfg.epsilon_rule = EpsilonRule::KnnRadius;
  else if (rule == "fixed") cfg.epsilon_rule = EpsilonRule::Fixed;
  else fail(doc.source, ex.find("epsilon_rule")->line, "epsilon_rule", "expected knn or fixed");
  cfg.epsilon = ex.number("epsilon", cfg.epsilon);

  if (const auto* f = doc.section("features")) {
    f->allow_only({"law", "dim", "lo", "hi", "atoms", "probs"});
    cfg.feature_law = parse_feature_law(*f);
  }
  const std::size_t dim = feature_dim(cfg.feature_law);
  if (cfg.test_point && cfg.test_point->size() != dim) {
    fail(doc.source, ex.find("test_point")->line, "test_point", "dimension does not match features");
  }

  static const std::initializer_list<const char*> kModelKeys = {
      "type", "weight", "p1", "weights", "offset", "amplitude", "frequency", "phase"};
  const auto models = doc.all("model");
  if (!models.empty()) {
    std::vector<ConditionalModel> ms;
    std::vector<double> ws;
    for (const auto* m : models) {
      m->allow_only(kModelKeys);
      ms.push_back(parse_model(*m, dim));
      ws.push_back(m->number("weight", 1.0));
      if (!(ws.back() >= 0.0)) fail(doc.source, m->line, "weight", "must be >= 0");
    }
    double total = 0.0;
    for (double w : ws) total += w;
    if (!(total > 0.0)) fail(doc.source, models.front()->line, "weight", "weights sum to zero");
    for (double& w : ws) w /= total;
    try {
      cfg.prior.emplace(std::move(ms), std::move(ws), cfg.feature_law);
    } catch (const std::invalid_argument& e) {
      fail(doc.source, models.front()->line, "[model]", e.what());
    }
  }
  if (const auto* s = doc.section("size_prior")) {
    s->allow_only({"min", "max"});
    try {
      cfg.size_prior = SizePrior(s->integer("min"), s->integer("max"));
    } catch (const std::invalid_argument& e) {
      fail(doc.source, s->line, "[size_prior]", e.what());
    }
  }
  if (const auto* t = doc.section("truth")) {
    t->allow_only(kModelKeys);
    cfg.truth = parse_model(*t, dim);
  }
  if (const auto* t = doc.section("tilde")) {
    t->allow_only(kModelKeys);
    cfg.tilde = parse_model(*t, dim);
  }

  if (const auto* p = doc.section("predictor")) {
    p->allow_only({"family", "localized", "cap", "bandwidth", "scaling", "splits", "p1", "params",
                   "pretrain"});
    auto& spec = cfg.predictor;
    spec.present = true;
    spec.family = lower(p->text("family"));
    static const char* const kFamilies[] = {"window", "tree", "ensemble", "transformer",
                                            "constant", "first-label", "ppd"};
    if (std::find_if(std::begin(kFamilies), std::end(kFamilies),
                     [&](const char* k) { return spec.family == k; }) == std::end(kFamilies)) {
      fail(doc.source, p->find("family")->line, "family", "unknown predictor family '" + spec.family + "'");
    }
    spec.localized = p->flag("localized", false);
    spec.localizer.cap = p->integer("cap", spec.localizer.cap);
    if (spec.localizer.cap == 0) fail(doc.source, p->find("cap")->line, "cap", "must be >= 1");
    spec.window.bandwidth = p->number("bandwidth", spec.window.bandwidth);
    if (!(spec.window.bandwidth > 0.0)) {
      fail(doc.source, p->find("bandwidth")->line, "bandwidth", "must be > 0");
    }
    const std::string scaling = lower(p->text("scaling", "fixed"));
    if (scaling == "scaled") spec.window.scaling = BandwidthScaling::Scaled;
    else if (scaling != "fixed") fail(doc.source, p->find("scaling")->line, "scaling", "expected fixed or scaled");
    if (p->has("splits")) spec.tree.splits = p->numbers("splits");
    std::sort(spec.tree.splits.begin(), spec.tree.splits.end());
    spec.constant_p1 = p->number("p1", 0.5);
    if (!(spec.constant_p1 >= 0.0 && spec.constant_p1 <= 1.0)) {
      fail(doc.source, p->find("p1")->line, "p1", "must lie in [0, 1]");
    }
    if (p->has("params")) spec.params_file = p->text("params");
    if (p->has("pretrain")) spec.pretrain_config = p->text("pretrain");
    if (spec.family == "transformer" && !spec.params_file && !spec.pretrain_config) {
      fail(doc.source, p->line, "params", "transformer predictor needs params or pretrain");
    }
  }

  // Pretraining settings.
  PretrainConfig& pc = cfg.pretrain;
  if (cfg.prior) pc.prior = *cfg.prior;
  pc.size_prior = cfg.size_prior;
  pc.seed = cfg.seed;
  if (const auto* s = doc.section("pretrain")) {
    s->allow_only({"mc_sets", "holdout_sets"});
    pc.mc_sets = s->integer("mc_sets", pc.mc_sets);
    pc.holdout_sets = s->integer("holdout_sets", pc.holdout_sets);
    if (pc.mc_sets == 0) fail(doc.source, s->line, "mc_sets", "must be >= 1");
  }
  if (const auto* s = doc.section("window")) {
    s->allow_only({"scaling", "min_bandwidth", "max_bandwidth", "grid_points", "refine",
                   "golden_iterations"});
    auto& w = pc.window;
    const std::string scaling = lower(s->text("scaling", "fixed"));
    w.scaling = scaling == "scaled" ? BandwidthScaling::Scaled : BandwidthScaling::Fixed;
    w.min_bandwidth = s->number("min_bandwidth", w.min_bandwidth);
    w.max_bandwidth = s->number("max_bandwidth", w.max_bandwidth);
    w.grid_points = s->integer("grid_points", w.grid_points);
    w.refine = s->flag("refine", w.refine);
    w.golden_iterations = s->integer("golden_iterations", w.golden_iterations);
  }
  if (const auto* s = doc.section("tree")) {
    s->allow_only({"splits", "members", "sweeps", "candidates", "initial_step", "shrink"});
    auto& t = pc.tree;
    t.splits = s->integer("splits", t.splits);
    t.members = s->integer("members", t.members);
    t.sweeps = s->integer("sweeps", t.sweeps);
    t.candidates = s->integer("candidates", t.candidates);
    t.initial_step = s->number("initial_step", t.initial_step);
    t.shrink = s->number("shrink", t.shrink);
  }
  if (const auto* s = doc.section("sgd")) {
    s->allow_only({"hidden", "heads", "learning_rate", "epochs", "batch_size"});
    auto& g = pc.sgd;
    g.hidden = s->integer("hidden", g.hidden);
    g.heads = s->integer("heads", g.heads);
    g.learning_rate = s->number("learning_rate", g.learning_rate);
    g.epochs = s->integer("epochs", g.epochs);
    g.batch_size = s->integer("batch_size", g.batch_size);
    if (!(g.learning_rate > 0.0)) fail(doc.source, s->find("learning_rate")->line, "learning_rate", "must be > 0");
  }
  pc.sgd.workers = cfg.workers;

  // Cross-field requirements per experiment kind.
  const bool needs_grid = cfg.kind == ExperimentKind::BiasVariance ||
                          (cfg.kind == ExperimentKind::Probe && cfg.probe != ProbeKind::Symmetry);
  if (needs_grid && cfg.n_grid.empty()) fail(doc.source, ex.line, "n_grid", "required for this experiment");
  for (std::size_t n : cfg.n_grid) {
    if (n == 0) fail(doc.source, ex.find("n_grid")->line, "n_grid", "sizes must be >= 1");
  }
  if ((cfg.kind == ExperimentKind::Pretrain || cfg.kind == ExperimentKind::PpdCheck) && !cfg.prior) {
    fail(doc.source, 0, "[model]", "at least one [model] section is required");
  }
  if ((cfg.kind == ExperimentKind::BiasVariance || cfg.kind == ExperimentKind::Probe) && !cfg.truth) {
    fail(doc.source, 0, "[truth]", "a [truth] section is required");
  }
  if (cfg.kind == ExperimentKind::Probe && cfg.probe == ProbeKind::Locality && !cfg.tilde) {
    fail(doc.source, 0, "[tilde]", "a [tilde] section is required for the locality probe");
  }
  const bool needs_predictor = cfg.kind == ExperimentKind::BiasVariance ||
                               (cfg.kind == ExperimentKind::Probe);
  if (needs_predictor && !doc.section("predictor")) {
    fail(doc.source, 0, "[predictor]", "a [predictor] section is required");
  }
  if (cfg.kind == ExperimentKind::BiasVariance && cfg.replicates < 2) {
    fail(doc.source, ex.line, "replicates", "must be >= 2");
  }
  if (cfg.kind == ExperimentKind::Pretrain) {
    static const char* const kFamilies[] = {"window", "tree", "ensemble", "transformer"};
    if (std::find_if(std::begin(kFamilies), std::end(kFamilies),
                     [&](const char* k) { return cfg.family == k; }) == std::end(kFamilies)) {
      fail(doc.source, ex.line, "family", "unknown pretraining family '" + cfg.family + "'");
    }
  }
  return cfg;
}

ExperimentConfig load_experiment(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file: " + path.string(), 0, "");
  std::ostringstream ss;
  ss << in.rdbuf();
  ExperimentConfig cfg;
  try {
    cfg = parse_experiment(parse_ini(ss.str(), path.string()));
  } catch (const ConfigError& e) {
    const std::string what = e.what();
    if (what.rfind(path.string(), 0) == 0) throw;
    throw ConfigError(path.string() + ": " + what, e.line(), e.field());
  }
  cfg.source_text = ss.str();
  cfg.base_dir = path.has_parent_path() ? path.parent_path() : fs::path(".");
  return cfg;
}

}  // namespace pfnlab
