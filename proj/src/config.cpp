#include "ncache/config.hpp"

#include "ncache/io.hpp"

#include <cstdlib>
#include <map>
#include <sstream>

namespace ncache {

namespace {

using json = nlohmann::json;

const ConfigKey* find_key(const std::string& path) {
  for (const auto& k : config_keys()) {
    if (k.path == path) return &k;
  }
  return nullptr;
}

std::string type_name(KeyType t) {
  switch (t) {
    case KeyType::String: return "string";
    case KeyType::Integer: return "integer";
    case KeyType::Real: return "real";
    case KeyType::Boolean: return "boolean";
    case KeyType::RealList: return "list of reals";
    case KeyType::IntegerList: return "list of integers";
    case KeyType::Object: return "object";
    case KeyType::ObjectList: return "list of objects";
  }
  return "?";
}

bool type_matches(const json& v, const ConfigKey& key) {
  // explicit null falls back to the default
  if (v.is_null()) return key.path != "dataset";
  switch (key.type) {
    case KeyType::String: return v.is_string();
    case KeyType::Integer: return v.is_number_unsigned() || (v.is_number_integer() && v.get<long long>() >= 0);
    case KeyType::Real: return v.is_number();
    case KeyType::Boolean: return v.is_boolean();
    case KeyType::RealList:
      return v.is_array() && std::all_of(v.begin(), v.end(), [](const json& x) { return x.is_number(); });
    case KeyType::IntegerList:
      return v.is_array() && std::all_of(v.begin(), v.end(), [](const json& x) {
               return x.is_number_unsigned() || (x.is_number_integer() && x.get<long long>() >= 0);
             });
    case KeyType::Object: return v.is_object() || (key.path == "policy" && v.is_string());
    case KeyType::ObjectList:
      return v.is_array() && std::all_of(v.begin(), v.end(), [](const json& x) { return x.is_object(); });
  }
  return false;
}

/// Line of the first occurrence of `"key"` in the raw document, if any.
std::string locate(std::string_view raw, const std::string& key) {
  if (raw.empty()) return {};
  const auto leaf = key.substr(key.rfind('.') == std::string::npos ? 0 : key.rfind('.') + 1);
  const auto pos = raw.find('"' + leaf + '"');
  if (pos == std::string_view::npos) return {};
  return ":" + std::to_string(line_of_offset(raw, pos));
}

struct Diagnostics {
  std::string source;
  std::string_view raw;

  [[noreturn]] void fail(const std::string& key, const std::string& what) const {
    throw ValidationError(source + locate(raw, key) + ": " + key + ": " + what);
  }

  void check(const json& obj, const std::string& prefix) const {
    for (const auto& [name, value] : obj.items()) {
      const std::string path = prefix.empty() ? name : prefix + "." + name;
      const ConfigKey* key = find_key(path);
      if (key == nullptr) fail(path, "unknown key");
      if (!type_matches(value, *key)) fail(path, "expected " + type_name(key->type));
      if (key->type == KeyType::Object && value.is_object()) check(value, path);
      if (key->type == KeyType::ObjectList) {
        for (const auto& item : value) check(item, "policy");
      }
    }
  }
};

template <typename T>
T get_or(const json& obj, const char* name, T fallback) {
  const auto it = obj.find(name);
  if (it == obj.end() || it->is_null()) return fallback;
  return it->get<T>();
}

PolicyConfig parse_policy(const json& j) {
  PolicyConfig p;
  if (j.is_string()) {
    p.kind = policy_kind_from_string(j.get<std::string>());
    return p;
  }
  p.kind = policy_kind_from_string(get_or<std::string>(j, "kind", to_string(p.kind)));
  p.mode = threshold_mode_from_string(get_or<std::string>(j, "mode", to_string(p.mode)));
  if (const auto it = j.find("fixed_threshold"); it != j.end() && !it->is_null()) p.fixed_threshold = it->get<double>();
  p.committee_size = get_or<int>(j, "committee_size", p.committee_size);
  p.coreset_threshold = get_or<double>(j, "coreset_threshold", p.coreset_threshold);
  p.invert_margin = get_or<bool>(j, "invert_margin", p.invert_margin);
  p.name = get_or<std::string>(j, "name", p.name);
  return p;
}

json policy_to_json(const PolicyConfig& p) {
  return {{"kind", to_string(p.kind)},
          {"mode", to_string(p.mode)},
          {"fixed_threshold", p.fixed_threshold ? json(*p.fixed_threshold) : json()},
          {"committee_size", p.committee_size},
          {"coreset_threshold", p.coreset_threshold},
          {"invert_margin", p.invert_margin},
          {"name", p.label()}};
}

}  // namespace

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys{
      {"dataset", KeyType::String, "(required)", "dataset directory; relative paths resolve against the config file, then $NCACHE_DATA_DIR"},
      {"budgets", KeyType::RealList, "[1000, 2000, 3000]", "post-warmup teacher budgets b swept by `sweep`"},
      {"budget", KeyType::Real, "(unset)", "single budget; shorthand for budgets = [budget]"},
      {"seeds", KeyType::IntegerList, "[0, 1, 2]", "run seeds; each fixes stream order, training shuffles and policy draws"},
      {"regime", KeyType::String, "retrain", "retrain | no_retrain"},
      {"retrain_frequency", KeyType::Integer, "1000", "retrain the student every f streamed instances (f >= 1)"},
      {"warmup_size", KeyType::Integer, "100", "N teacher-labelled instances used to train the initial student"},
      {"cost_per_query", KeyType::Real, "1", "constant teacher cost c(x)"},
      {"label_mode", KeyType::String, "soft", "soft | hard teacher targets"},
      {"oracle_filter", KeyType::Boolean, "false", "train only on correct teacher labels (calls are still charged and emitted)"},
      {"oracle_analysis", KeyType::Boolean, "false", "sweep: also run every cell with the oracle filter and report deltas"},
      {"include_warmup_in_scoring", KeyType::Boolean, "false", "count warmup instances in online accuracy"},
      {"committee_prefill_step", KeyType::Integer, "100", "prior committee students use N - k * step warmup examples"},
      {"prefill_committee_when_retraining", KeyType::Boolean, "false", "prefill the committee in the retrain regime as well"},
      {"policy", KeyType::Object, "{\"kind\": \"margin\"}", "selection policy block (or a bare kind name)"},
      {"policies", KeyType::ObjectList, "(unset)", "list of policy blocks compared in one sweep; replaces `policy`"},
      {"policy.kind", KeyType::String, "margin", "front_loading | random | margin | entropy | qbc | coreset"},
      {"policy.mode", KeyType::String, "fixed", "fixed | adaptive (percentile of the score history)"},
      {"policy.fixed_threshold", KeyType::Real, "margin 5, entropy 0.5, qbc 0.25, coreset s",
       "fixed threshold in criterion units; qbc is a disagreement fraction"},
      {"policy.committee_size", KeyType::Integer, "4", "committee size d"},
      {"policy.coreset_threshold", KeyType::Real, "0.9", "coreset similarity threshold s"},
      {"policy.invert_margin", KeyType::Boolean, "false", "treat high margin as uncertain (ablation)"},
      {"policy.name", KeyType::String, "(kind)", "label used in reports and trace file names"},
      {"training", KeyType::Object, "{}", "student training block"},
      {"training.max_epochs", KeyType::Integer, "30", "maximum epochs per retraining"},
      {"training.patience", KeyType::Integer, "5", "early-stopping patience in epochs"},
      {"training.validation_fraction", KeyType::Real, "0.1", "held-out fraction of accumulated labels, in (0, 0.5)"},
      {"training.learning_rate", KeyType::Real, "0.1", "mini-batch gradient descent step size"},
      {"training.batch_size", KeyType::Integer, "32", "mini-batch size"},
      {"training.l2_penalty", KeyType::Real, "0.0001", "L2 penalty on non-bias weights"},
  };
  return keys;
}

std::string config_help() {
  std::ostringstream out;
  out << "Config keys (JSON document):\n";
  for (const auto& k : config_keys()) {
    out << "  " << k.path << " (" << type_name(k.type) << ", default " << k.default_value << ")\n      " << k.doc
        << "\n";
  }
  return out.str();
}

ExperimentConfig parse_experiment_config(const json& doc, const std::string& source, std::string_view raw) {
  const Diagnostics diag{source, raw};
  if (!doc.is_object()) throw ValidationError(source + ": config must be a JSON object");
  diag.check(doc, "");
  if (!doc.contains("dataset")) diag.fail("dataset", "missing required key");
  if (doc.contains("budget") && doc.contains("budgets")) diag.fail("budget", "give either budget or budgets, not both");
  if (doc.contains("policy") && doc.contains("policies")) diag.fail("policies", "give either policy or policies, not both");

  ExperimentConfig cfg;
  std::string current = "dataset";
  try {
    cfg.dataset = doc.at("dataset").get<std::string>();
    current = "budgets";
    if (const auto it = doc.find("budget"); it != doc.end() && !it->is_null()) {
      current = "budget";
      cfg.budgets = {it->get<double>()};
    } else {
      cfg.budgets = get_or(doc, "budgets", cfg.budgets);
    }
    current = "seeds";
    cfg.seeds = get_or(doc, "seeds", cfg.seeds);
    auto& b = cfg.base;
    current = "regime";
    b.regime = regime_from_string(get_or<std::string>(doc, "regime", to_string(b.regime)));
    current = "retrain_frequency";
    b.retrain_frequency = get_or(doc, "retrain_frequency", b.retrain_frequency);
    current = "warmup_size";
    b.warmup_size = get_or(doc, "warmup_size", b.warmup_size);
    current = "cost_per_query";
    b.cost_per_query = get_or(doc, "cost_per_query", b.cost_per_query);
    current = "label_mode";
    b.train.label_mode = label_mode_from_string(get_or<std::string>(doc, "label_mode", to_string(b.train.label_mode)));
    b.oracle_filter = get_or(doc, "oracle_filter", b.oracle_filter);
    cfg.oracle_analysis = get_or(doc, "oracle_analysis", cfg.oracle_analysis);
    b.include_warmup_in_scoring = get_or(doc, "include_warmup_in_scoring", b.include_warmup_in_scoring);
    current = "committee_prefill_step";
    b.committee_prefill_step = get_or(doc, "committee_prefill_step", b.committee_prefill_step);
    b.prefill_committee_when_retraining =
        get_or(doc, "prefill_committee_when_retraining", b.prefill_committee_when_retraining);
    current = "policy";
    if (const auto it = doc.find("policies"); it != doc.end() && !it->is_null()) {
      current = "policies";
      cfg.policies.clear();
      for (const auto& p : *it) cfg.policies.push_back(parse_policy(p));
    } else if (const auto p = doc.find("policy"); p != doc.end() && !p->is_null()) {
      cfg.policies = {parse_policy(*p)};
    }
    current = "training";
    if (const auto t = doc.find("training"); t != doc.end() && !t->is_null()) {
      auto& tc = b.train;
      tc.max_epochs = get_or(*t, "max_epochs", tc.max_epochs);
      tc.patience = get_or(*t, "patience", tc.patience);
      tc.validation_fraction = get_or(*t, "validation_fraction", tc.validation_fraction);
      tc.learning_rate = get_or(*t, "learning_rate", tc.learning_rate);
      tc.batch_size = get_or(*t, "batch_size", tc.batch_size);
      tc.l2_penalty = get_or(*t, "l2_penalty", tc.l2_penalty);
    }
    cfg.validate();
  } catch (const ValidationError& e) {
    // messages from validate() lead with the offending key
    std::string msg = e.what();
    const auto end = msg.find_first_of(" :");
    const std::string key = end == std::string::npos ? current : msg.substr(0, end);
    throw ValidationError(source + locate(raw, key) + ": " + msg);
  } catch (const json::exception& e) {
    diag.fail(current, e.what());
  }
  return cfg;
}

void apply_override(json& doc, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    throw ValidationError("override '" + std::string(assignment) + "': expected key=value");
  }
  const std::string path(assignment.substr(0, eq));
  const std::string text(assignment.substr(eq + 1));
  const ConfigKey* key = find_key(path);
  if (key == nullptr) throw ValidationError("override: " + path + ": unknown key");

  json value;
  try {
    value = json::parse(text);
  } catch (const json::parse_error&) {
    if (key->type != KeyType::String && !(key->type == KeyType::Object && path == "policy")) {
      throw ValidationError("override: " + path + ": expected " + type_name(key->type) + ", got '" + text + "'");
    }
    value = text;
  }
  if (key->type == KeyType::String && !value.is_string()) value = text;
  if (!type_matches(value, *key)) {
    throw ValidationError("override: " + path + ": expected " + type_name(key->type) + ", got '" + text + "'");
  }

  json* target = &doc;
  std::string rest = path;
  for (auto dot = rest.find('.'); dot != std::string::npos; dot = rest.find('.')) {
    const std::string head = rest.substr(0, dot);
    if (head == "policy" && doc.contains("policies")) {
      throw ValidationError("override: " + path + ": config uses `policies`; override each policy in the file");
    }
    json& child = (*target)[head];
    if (child.is_string() && head == "policy") child = json{{"kind", child.get<std::string>()}};
    if (child.is_null()) child = json::object();
    target = &child;
    rest = rest.substr(dot + 1);
  }
  (*target)[rest] = value;
  if (path == "budget") doc.erase("budgets");
  if (path == "budgets") doc.erase("budget");
}

std::filesystem::path resolve_dataset_path(const std::filesystem::path& p, const std::filesystem::path& base) {
  if (p.is_absolute()) return p;
  if (!base.empty() && std::filesystem::exists(base / p)) return base / p;
  if (std::filesystem::exists(p)) return p;
  if (const char* env = std::getenv(kDataDirEnv); env != nullptr && *env != '\0') {
    return std::filesystem::path(env) / p;
  }
  return base.empty() ? p : base / p;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  const std::string raw = read_file(path);
  json doc;
  try {
    doc = json::parse(raw);
  } catch (const json::parse_error& e) {
    throw ValidationError(path.string() + ":" + std::to_string(line_of_offset(raw, e.byte)) +
                          ": malformed JSON: " + e.what());
  }
  for (const auto& o : overrides) apply_override(doc, o);
  ExperimentConfig cfg = parse_experiment_config(doc, path.string(), raw);
  cfg.dataset = resolve_dataset_path(cfg.dataset, path.parent_path());
  return cfg;
}

json experiment_config_to_json(const ExperimentConfig& c) {
  json policies = json::array();
  for (const auto& p : c.policies) policies.push_back(policy_to_json(p));
  const auto& b = c.base;
  return {{"dataset", c.dataset.string()},
          {"budgets", c.budgets},
          {"seeds", c.seeds},
          {"regime", to_string(b.regime)},
          {"retrain_frequency", b.retrain_frequency},
          {"warmup_size", b.warmup_size},
          {"cost_per_query", b.cost_per_query},
          {"label_mode", to_string(b.train.label_mode)},
          {"oracle_filter", b.oracle_filter},
          {"oracle_analysis", c.oracle_analysis},
          {"include_warmup_in_scoring", b.include_warmup_in_scoring},
          {"committee_prefill_step", b.committee_prefill_step},
          {"prefill_committee_when_retraining", b.prefill_committee_when_retraining},
          {"policies", policies},
          {"training",
           {{"max_epochs", b.train.max_epochs},
            {"patience", b.train.patience},
            {"validation_fraction", b.train.validation_fraction},
            {"learning_rate", b.train.learning_rate},
            {"batch_size", b.train.batch_size},
            {"l2_penalty", b.train.l2_penalty}}}};
}

}  // namespace ncache
