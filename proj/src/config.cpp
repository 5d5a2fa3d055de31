#include "hoi/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

#include "hoi/errors.hpp"
#include "hoi/rng.hpp"

namespace hoi {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& v) {
  double out = 0;
  const auto* end = v.data() + v.size();
  const auto r = std::from_chars(v.data(), end, out);
  if (r.ec != std::errc{} || r.ptr != end) throw ConfigError(key + ": expected a number, got '" + v + "'");
  return out;
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto* end = v.data() + v.size();
  const auto r = std::from_chars(v.data(), end, out);
  if (r.ec != std::errc{} || r.ptr != end)
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on") return true;
  if (v == "false" || v == "0" || v == "off") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

std::string fmt_double(double x) {
  std::ostringstream os;
  os.precision(17);
  os << x;
  return os.str();
}

struct Field {
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
};

Field real(double RunConfig::*member) {
  return {[member](const RunConfig& c) { return fmt_double(c.*member); },
          [member](RunConfig& c, const std::string& k, const std::string& v) { c.*member = parse_double(k, v); }};
}
template <class F>
Field real_at(F access) {
  return {[access](const RunConfig& c) { return fmt_double(access(const_cast<RunConfig&>(c))); },
          [access](RunConfig& c, const std::string& k, const std::string& v) { access(c) = parse_double(k, v); }};
}
template <class F>
Field count_at(F access) {
  return {[access](const RunConfig& c) { return std::to_string(access(const_cast<RunConfig&>(c))); },
          [access](RunConfig& c, const std::string& k, const std::string& v) {
            access(c) = static_cast<std::remove_reference_t<decltype(access(c))>>(parse_u64(k, v));
          }};
}
template <class F>
Field flag_at(F access) {
  return {[access](const RunConfig& c) { return std::string(access(const_cast<RunConfig&>(c)) ? "true" : "false"); },
          [access](RunConfig& c, const std::string& k, const std::string& v) { access(c) = parse_bool(k, v); }};
}

const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> table = [] {
    std::vector<std::pair<std::string, Field>> t;
    t.emplace_back("seed", count_at([](RunConfig& c) -> std::uint64_t& { return c.seed; }));
    // data
    t.emplace_back("n_train", count_at([](RunConfig& c) -> std::size_t& { return c.data.n_train; }));
    t.emplace_back("n_test", count_at([](RunConfig& c) -> std::size_t& { return c.data.n_test; }));
    t.emplace_back("min_triplets", count_at([](RunConfig& c) -> std::size_t& { return c.data.min_triplets; }));
    t.emplace_back("max_triplets", count_at([](RunConfig& c) -> std::size_t& { return c.data.max_triplets; }));
    t.emplace_back("sibling_rate", real_at([](RunConfig& c) -> double& { return c.data.sibling_rate; }));
    t.emplace_back("zipf_exponent", real_at([](RunConfig& c) -> double& { return c.data.zipf_exponent; }));
    t.emplace_back("grid_h", count_at([](RunConfig& c) -> std::size_t& { return c.data.grid.height; }));
    t.emplace_back("grid_w", count_at([](RunConfig& c) -> std::size_t& { return c.data.grid.width; }));
    t.emplace_back("noise_sigma", real_at([](RunConfig& c) -> double& { return c.data.grid.noise_sigma; }));
    // embeddings
    t.emplace_back("embeddings",
                   Field{[](const RunConfig& c) { return c.embeddings; },
                         [](RunConfig& c, const std::string& k, const std::string& v) {
                           if (v.empty()) throw ConfigError(k + ": empty value");
                           c.embeddings = v;
                         }});
    t.emplace_back("emb_alpha", real_at([](RunConfig& c) -> double& { return c.pseudo.alpha; }));
    t.emplace_back("emb_beta", real_at([](RunConfig& c) -> double& { return c.pseudo.beta; }));
    t.emplace_back("emb_gamma", real_at([](RunConfig& c) -> double& { return c.pseudo.gamma; }));
    t.emplace_back("emb_seed", count_at([](RunConfig& c) -> std::uint64_t& { return c.pseudo.seed; }));
    // model
    t.emplace_back("dim", count_at([](RunConfig& c) -> std::size_t& { return c.model.dim; }));
    t.emplace_back("layers", count_at([](RunConfig& c) -> std::size_t& { return c.model.layers; }));
    t.emplace_back("heads", count_at([](RunConfig& c) -> std::size_t& { return c.model.heads; }));
    t.emplace_back("ffn_dim", count_at([](RunConfig& c) -> std::size_t& { return c.model.ffn_dim; }));
    t.emplace_back("num_queries", count_at([](RunConfig& c) -> std::size_t& { return c.model.num_queries; }));
    t.emplace_back("spatial_dim", count_at([](RunConfig& c) -> std::size_t& { return c.model.spatial_dim; }));
    t.emplace_back("logit_scale", real_at([](RunConfig& c) -> double& { return c.model.logit_scale; }));
    t.emplace_back("prior_prob", real_at([](RunConfig& c) -> double& { return c.model.prior_prob; }));
    // losses
    t.emplace_back("lambda_detector", real_at([](RunConfig& c) -> double& { return c.lambda.detector; }));
    t.emplace_back("lambda_con", real_at([](RunConfig& c) -> double& { return c.lambda.con; }));
    t.emplace_back("lambda_cal", real_at([](RunConfig& c) -> double& { return c.lambda.cal; }));
    t.emplace_back("lambda_merge", real_at([](RunConfig& c) -> double& { return c.lambda.merge; }));
    t.emplace_back("lambda_split", real_at([](RunConfig& c) -> double& { return c.lambda.split; }));
    t.emplace_back("lambda_box", real_at([](RunConfig& c) -> double& { return c.det_loss.lambda_box; }));
    t.emplace_back("lambda_giou", real_at([](RunConfig& c) -> double& { return c.det_loss.lambda_giou; }));
    t.emplace_back("lambda_cls_object", real_at([](RunConfig& c) -> double& { return c.det_loss.lambda_cls_object; }));
    t.emplace_back("lambda_cls_action", real_at([](RunConfig& c) -> double& { return c.det_loss.lambda_cls_action; }));
    t.emplace_back("eos_coef", real_at([](RunConfig& c) -> double& { return c.det_loss.eos_coef; }));
    t.emplace_back("focal_alpha", real_at([](RunConfig& c) -> double& { return c.det_loss.focal_alpha; }));
    t.emplace_back("focal_gamma", real_at([](RunConfig& c) -> double& { return c.det_loss.focal_gamma; }));
    t.emplace_back("action_loss",
                   Field{[](const RunConfig& c) {
                           return std::string(c.det_loss.action_loss == ActionLoss::Focal ? "focal" : "softmax");
                         },
                         [](RunConfig& c, const std::string& k, const std::string& v) {
                           if (v == "focal") c.det_loss.action_loss = ActionLoss::Focal;
                           else if (v == "softmax") c.det_loss.action_loss = ActionLoss::Softmax;
                           else throw ConfigError(k + ": expected focal or softmax, got '" + v + "'");
                         }});
    t.emplace_back("match_cls", real_at([](RunConfig& c) -> double& { return c.match.cls; }));
    t.emplace_back("match_box", real_at([](RunConfig& c) -> double& { return c.match.box; }));
    t.emplace_back("match_giou", real_at([](RunConfig& c) -> double& { return c.match.giou; }));
    t.emplace_back("tau_con", real(&RunConfig::tau_con));
    t.emplace_back("tau_split", real(&RunConfig::tau_split));
    t.emplace_back("k1", count_at([](RunConfig& c) -> std::size_t& { return c.k1; }));
    t.emplace_back("k2", count_at([](RunConfig& c) -> std::size_t& { return c.k2; }));
    t.emplace_back("m1", count_at([](RunConfig& c) -> std::size_t& { return c.m1; }));
    t.emplace_back("m2", count_at([](RunConfig& c) -> std::size_t& { return c.m2; }));
    t.emplace_back("negated_cal_sign", flag_at([](RunConfig& c) -> bool& { return c.negated_cal_sign; }));
    // toggles
    t.emplace_back("hor_mask_on", flag_at([](RunConfig& c) -> bool& { return c.toggles.hor_mask; }));
    t.emplace_back("con_on", flag_at([](RunConfig& c) -> bool& { return c.toggles.con; }));
    t.emplace_back("cal_on", flag_at([](RunConfig& c) -> bool& { return c.toggles.cal; }));
    t.emplace_back("merge_on", flag_at([](RunConfig& c) -> bool& { return c.toggles.merge; }));
    t.emplace_back("split_on", flag_at([](RunConfig& c) -> bool& { return c.toggles.split; }));
    // optimisation
    t.emplace_back("optimizer",
                   Field{[](const RunConfig& c) { return to_string(c.optim.kind); },
                         [](RunConfig& c, const std::string&, const std::string& v) {
                           c.optim.kind = parse_optimizer_kind(v);
                         }});
    t.emplace_back("lr", real(&RunConfig::lr));
    t.emplace_back("momentum", real_at([](RunConfig& c) -> double& { return c.optim.momentum; }));
    t.emplace_back("weight_decay", real_at([](RunConfig& c) -> double& { return c.optim.weight_decay; }));
    t.emplace_back("clip_norm", real_at([](RunConfig& c) -> double& { return c.optim.clip_norm; }));
    t.emplace_back("epochs", count_at([](RunConfig& c) -> std::size_t& { return c.epochs; }));
    t.emplace_back("lr_decay_epoch", count_at([](RunConfig& c) -> std::size_t& { return c.lr_decay_epoch; }));
    t.emplace_back("lr_decay_factor", real(&RunConfig::lr_decay_factor));
    t.emplace_back("batch_size", count_at([](RunConfig& c) -> std::size_t& { return c.batch_size; }));
    t.emplace_back("eval_top_k", count_at([](RunConfig& c) -> std::size_t& { return c.eval_top_k; }));
    return t;
  }();
  return table;
}

const Field* find_field(const std::string& key) {
  for (const auto& [k, f] : fields())
    if (k == key) return &f;
  return nullptr;
}

}  // namespace

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> out;
    for (const auto& [k, f] : fields()) out.push_back(k);
    return out;
  }();
  return keys;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  // Group switches for the two debiasing modules.
  if (key == "c2c_on") {
    set("con_on", value);
    set("cal_on", value);
    return;
  }
  if (key == "m2s_on") {
    set("merge_on", value);
    set("split_on", value);
    return;
  }
  const Field* f = find_field(key);
  if (!f) throw ConfigError("unknown config key '" + key + "'");
  f->set(*this, key, value);
}

RunConfig RunConfig::parse(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  cfg.validate();
  return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::map<std::string, std::string> RunConfig::entries() const {
  std::map<std::string, std::string> out;
  for (const auto& [k, f] : fields()) out[k] = f.get(*this);
  return out;
}

std::string RunConfig::to_text() const {
  std::string out;
  for (const auto& [k, f] : fields()) out += k + " = " + f.get(*this) + "\n";
  return out;
}

std::string RunConfig::hash() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(to_text())));
  return buf;
}

void RunConfig::validate() const {
  auto require = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
  };
  for (const auto& [name, v] :
       {std::pair<const char*, double>{"lambda_detector", lambda.detector}, {"lambda_con", lambda.con},
        {"lambda_cal", lambda.cal}, {"lambda_merge", lambda.merge}, {"lambda_split", lambda.split},
        {"lambda_box", det_loss.lambda_box}, {"lambda_giou", det_loss.lambda_giou},
        {"lambda_cls_object", det_loss.lambda_cls_object}, {"lambda_cls_action", det_loss.lambda_cls_action},
        {"match_cls", match.cls}, {"match_box", match.box}, {"match_giou", match.giou},
        {"eos_coef", det_loss.eos_coef}, {"focal_gamma", det_loss.focal_gamma}, {"weight_decay", optim.weight_decay},
        {"clip_norm", optim.clip_norm}, {"noise_sigma", data.grid.noise_sigma}})
    require(std::isfinite(v) && v >= 0, std::string(name) + " must be finite and >= 0");
  require(std::isfinite(tau_con) && tau_con > 0, "tau_con must be > 0");
  require(std::isfinite(tau_split) && tau_split > 0, "tau_split must be > 0");
  require(std::isfinite(lr) && lr > 0, "lr must be > 0");
  require(std::isfinite(lr_decay_factor) && lr_decay_factor > 0, "lr_decay_factor must be > 0");
  require(data.sibling_rate >= 0 && data.sibling_rate <= 1, "sibling_rate must lie in [0, 1]");
  require(std::isfinite(data.zipf_exponent) && data.zipf_exponent >= 0, "zipf_exponent must be >= 0");
  require(data.min_triplets >= 1 && data.min_triplets <= data.max_triplets, "need 1 <= min_triplets <= max_triplets");
  require(data.grid.height > 0 && data.grid.width > 0, "grid must be non-empty");
  require(model.dim > 0 && model.heads > 0 && model.dim % model.heads == 0, "dim must be a positive multiple of heads");
  require(model.num_queries > 0 && model.spatial_dim > 0 && model.ffn_dim > 0, "model sizes must be positive");
  require(model.prior_prob > 0 && model.prior_prob < 1, "prior_prob must lie in (0, 1)");
  require(det_loss.focal_alpha >= 0 && det_loss.focal_alpha <= 1, "focal_alpha must lie in [0, 1]");
  require(k1 > 0 && k2 > 0, "k1 and k2 must be positive");
  require(m1 > 0 && m2 > 0, "m1 and m2 must be positive");
  require(batch_size > 0, "batch_size must be positive");
  require(eval_top_k > 0, "eval_top_k must be positive");
  require(optim.momentum >= 0 && optim.momentum < 1, "momentum must lie in [0, 1)");
}

double total_loss(const LossReport& r, const LambdaWeights& w, const ObjectiveToggles& on) {
  double total = w.detector * r.l_detector;
  if (on.con) total += w.con * r.l_con;
  if (on.cal) total += w.cal * r.l_cal;
  if (on.merge) total += w.merge * r.l_merge;
  if (on.split) total += w.split * r.l_split;
  return total;
}

}  // namespace hoi
