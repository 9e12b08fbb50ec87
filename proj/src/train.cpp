#include "opfc/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "opfc/acopf.hpp"
#include "opfc/io.hpp"
#include "opfc/ipm.hpp"
#include "opfc/spectra.hpp"

namespace opfc {

using Eigen::MatrixXd;
using Eigen::VectorXd;

std::string mode_name(TrainMode m) {
  switch (m) {
    case TrainMode::compact: return "compact";
    case TrainMode::convl_small: return "convl_small";
    case TrainMode::convl_large: return "convl_large";
  }
  return "?";
}

TrainMode parse_mode(const std::string& s) {
  if (s == "compact") return TrainMode::compact;
  if (s == "convl_small") return TrainMode::convl_small;
  if (s == "convl_large") return TrainMode::convl_large;
  throw Error("unknown training mode '" + s + "'");
}

std::string target_name(TrainTarget t) { return t == TrainTarget::primal ? "primal" : "dual"; }

TrainTarget parse_target(const std::string& s) {
  if (s == "primal") return TrainTarget::primal;
  if (s == "dual") return TrainTarget::dual;
  throw Error("unknown training target '" + s + "'");
}

void TrainConfig::validate() const {
  if (!(pc_ratio > 0.0 && pc_ratio <= 1.0)) throw Error("train: pc_ratio must be in (0, 1]");
  if (batch_size < 1) throw Error("train: batch_size must be >= 1");
  if (max_epochs < 1) throw Error("train: max_epochs must be >= 1");
  if (!(adam_lr > 0.0)) throw Error("train: adam_lr must be positive");
  if (!(beta >= 0.0 && beta < 1.0)) throw Error("train: beta must be in [0, 1)");
  if (layers < 1) throw Error("train: layers must be >= 1");
  if (hidden < 0) throw Error("train: hidden must be >= 0");
  gha.validate();
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"pc_ratio", c.pc_ratio},     {"batch_size", c.batch_size}, {"max_epochs", c.max_epochs},
          {"adam_lr", c.adam_lr},       {"gha", to_json(c.gha)},      {"beta", c.beta},
          {"seed", c.seed},             {"mode", mode_name(c.mode)},  {"target", target_name(c.target)},
          {"layers", c.layers},         {"hidden", c.hidden}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.pc_ratio = j.value("pc_ratio", c.pc_ratio);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.max_epochs = j.value("max_epochs", c.max_epochs);
  c.adam_lr = j.value("adam_lr", c.adam_lr);
  if (j.contains("gha")) c.gha = gha_schedule_from_json(j.at("gha"));
  c.beta = j.value("beta", c.beta);
  c.seed = j.value("seed", c.seed);
  c.mode = parse_mode(j.value("mode", mode_name(c.mode)));
  c.target = parse_target(j.value("target", target_name(c.target)));
  c.layers = j.value("layers", c.layers);
  c.hidden = j.value("hidden", c.hidden);
  c.validate();
  return c;
}

int num_components(int d, double ratio) {
  return std::max(1, static_cast<int>(std::lround(ratio * static_cast<double>(d))));
}

int hidden_width(const TrainConfig& cfg, int d) {
  if (cfg.hidden > 0) return cfg.hidden;
  return cfg.mode == TrainMode::convl_large ? d : num_components(d, cfg.pc_ratio);
}

std::size_t parameter_count(int n_in, int hidden, int n_out, int layers) {
  const auto a = static_cast<std::size_t>(n_in), h = static_cast<std::size_t>(hidden), o = static_cast<std::size_t>(n_out);
  if (layers == 1) return a * o + o;
  return a * h + h + static_cast<std::size_t>(layers - 2) * (h * h + h) + h * o + o;
}

namespace {

std::uint64_t derive_seed(std::uint64_t seed, std::uint32_t tag) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), tag};
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

MatrixXd gather(const MatrixXd& m, const std::vector<Eigen::Index>& idx, std::size_t begin, std::size_t end) {
  MatrixXd out(static_cast<Eigen::Index>(end - begin), m.cols());
  for (std::size_t r = begin; r < end; ++r) out.row(static_cast<Eigen::Index>(r - begin)) = m.row(idx[r]);
  return out;
}

// Shuffled mini-batch epochs; step(epoch, rows, iteration) returns the batch loss.
template <class Step>
void epoch_loop(Eigen::Index n, const TrainConfig& cfg, TrainLog* log, Step step) {
  std::mt19937_64 rng(derive_seed(cfg.seed, 1));
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  const auto bs = static_cast<std::size_t>(cfg.batch_size);
  std::int64_t it = 0;
  if (log) log->epoch_loss.clear();
  for (int e = 1; e <= cfg.max_epochs; ++e) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (std::size_t b = 0; b < order.size(); b += bs) {
      const std::size_t end = std::min(order.size(), b + bs);
      total += step(e, order, b, end, it++) * static_cast<double>(end - b);
    }
    const double mean = total / static_cast<double>(n);
    if (!std::isfinite(mean)) throw Error("training diverged at epoch " + std::to_string(e));
    if (log) log->epoch_loss.push_back(mean);
  }
}

void require_data(const Dataset& ds) {
  if (ds.records.empty()) throw Error("train: empty dataset");
}

ConventionalModel fit_conventional(const MatrixXd& X, const MatrixXd& Y, const TrainConfig& cfg, TrainLog* log) {
  const int d = static_cast<int>(Y.cols());
  ConventionalModel m;
  m.mode = cfg.mode;
  m.target = cfg.target;
  m.net = make_mlp(mlp_dims(static_cast<int>(X.cols()), hidden_width(cfg, d), d, cfg.layers), derive_seed(cfg.seed, 2));
  set_input_stats(m.net, X);
  VectorXd var;
  column_stats(Y, m.y_mean, var);
  m.y_scale = (var.array() + 1e-8).sqrt().matrix();
  const MatrixXd Yn = standardize_rows(Y, m.y_mean, m.y_scale);

  AdamState adam = make_adam(m.net, cfg.adam_lr);
  epoch_loop(X.rows(), cfg, log, [&](int e, const auto& order, std::size_t b, std::size_t end, std::int64_t) {
    const MatrixXd xb = gather(X, order, b, end);
    const MatrixXd yb = gather(Yn, order, b, end);
    ForwardCache cache;
    MatrixXd g;
    const double loss = l1_loss(forward(m.net, xb, &cache), yb, &g);
    adam.lr = adam_lr_for_epoch(cfg.adam_lr, e, cfg.max_epochs);
    adam_step(m.net, backward(m.net, cache, g), adam);
    return loss;
  });
  return m;
}

}  // namespace

CompactModel train_compact(const Dataset& train, const TrainConfig& cfg, TrainLog* log, const TrainHook& hook) {
  cfg.validate();
  if (cfg.mode != TrainMode::compact) throw Error("train_compact: mode must be compact");
  require_data(train);
  const MatrixXd X = train.inputs();
  const MatrixXd Y = cfg.target == TrainTarget::primal ? train.targets() : train.duals();
  CompactModel m;
  m.fingerprint = train.fingerprint;
  m.dim_x = static_cast<int>(X.cols());
  m.d = static_cast<int>(Y.cols());
  m.p = num_components(m.d, cfg.pc_ratio);
  m.pca = make_gha_state(m.d, m.p, derive_seed(cfg.seed, 3), cfg.beta);
  m.regressor = make_mlp(mlp_dims(m.dim_x, hidden_width(cfg, m.d), m.p, cfg.layers), derive_seed(cfg.seed, 2));
  set_input_stats(m.regressor, X);

  AdamState adam = make_adam(m.regressor, cfg.adam_lr);
  epoch_loop(X.rows(), cfg, log, [&](int e, const auto& order, std::size_t b, std::size_t end, std::int64_t it) {
    const MatrixXd xb = gather(X, order, b, end);
    const MatrixXd yb = gather(Y, order, b, end);
    gha_step(yb, m.pca, lr(e, cfg.gha));
    if (!m.pca.W.allFinite() || m.pca.W.cwiseAbs().maxCoeff() > 1e6)
      throw Error("GHA diverged at epoch " + std::to_string(e) + "; reduce gha.gamma_init");
    if (hook) hook("gha", it);

    ForwardCache cache;
    const MatrixXd z = forward(m.regressor, xb, &cache);
    const VectorXd scale = m.pca.scale();
    MatrixXd y = (z * m.pca.W.transpose()).array().rowwise() * scale.transpose().array();
    y.rowwise() += m.pca.mu.transpose();
    MatrixXd g;
    const double loss = l1_loss(y, yb, &g);
    const MatrixXd dz = (g.array().rowwise() * scale.transpose().array()).matrix() * m.pca.W;
    adam.lr = adam_lr_for_epoch(cfg.adam_lr, e, cfg.max_epochs);
    adam_step(m.regressor, backward(m.regressor, cache, dz), adam);
    if (hook) hook("regressor", it);
    return loss;
  });
  return m;
}

ConventionalModel train_conventional(const Dataset& train, const TrainConfig& cfg, TrainLog* log) {
  cfg.validate();
  if (cfg.mode == TrainMode::compact) throw Error("train_conventional: mode must be convl_small or convl_large");
  if (cfg.target != TrainTarget::primal) throw Error("train_conventional: use train_dual for dual targets");
  require_data(train);
  ConventionalModel m = fit_conventional(train.inputs(), train.targets(), cfg, log);
  m.nonnegative.assign(static_cast<std::size_t>(m.y_mean.size()), false);
  m.fingerprint = train.fingerprint;
  return m;
}

ConventionalModel train_dual(const Dataset& train, const Network& net, const TrainConfig& cfg, TrainLog* log) {
  cfg.validate();
  if (cfg.target != TrainTarget::dual) throw Error("train_dual: target must be dual");
  require_data(train);
  if (train.dim_dual != dim_dual(net)) throw Error("train_dual: dataset has no dual vectors for this network");
  ConventionalModel m = fit_conventional(train.inputs(), train.duals(), cfg, log);
  m.nonnegative = dual_inequality_mask(net);
  m.fingerprint = train.fingerprint;
  return m;
}

MatrixXd predict(const CompactModel& m, const MatrixXd& X) {
  const MatrixXd z = forward(m.regressor, X);
  MatrixXd y = (z * m.pca.W.transpose()).array().rowwise() * m.pca.scale().transpose().array();
  y.rowwise() += m.pca.mu.transpose();
  return y;
}

VectorXd predict_one(const CompactModel& m, const VectorXd& x) { return predict(m, MatrixXd(x.transpose())).row(0).transpose(); }

MatrixXd predict(const ConventionalModel& m, const MatrixXd& X) {
  MatrixXd y = forward(m.net, X).array().rowwise() * m.y_scale.transpose().array();
  y.rowwise() += m.y_mean.transpose();
  for (Eigen::Index k = 0; k < y.cols(); ++k)
    if (m.nonnegative[static_cast<std::size_t>(k)]) y.col(k) = y.col(k).cwiseMax(0.0);
  return y;
}

VectorXd predict_one(const ConventionalModel& m, const VectorXd& x) {
  return predict(m, MatrixXd(x.transpose())).row(0).transpose();
}

std::size_t num_parameters(const CompactModel& m) { return m.regressor.num_parameters(); }
std::size_t num_parameters(const ConventionalModel& m) { return m.net.num_parameters(); }

const std::string& TrainedModel::fingerprint() const {
  return kind == "compact" ? compact.fingerprint : conventional.fingerprint;
}

TrainTarget TrainedModel::target() const { return kind == "compact" ? TrainTarget::primal : conventional.target; }

std::string TrainedModel::method_name() const {
  if (kind == "compact") return "Compact";
  switch (conventional.mode) {
    case TrainMode::compact: return "Compact";
    case TrainMode::convl_small: return "CONVL-Small";
    case TrainMode::convl_large: return "CONVL-Large";
  }
  return "?";
}

std::size_t TrainedModel::parameters() const {
  return kind == "compact" ? num_parameters(compact) : num_parameters(conventional);
}

MatrixXd TrainedModel::predict(const MatrixXd& X) const {
  return kind == "compact" ? opfc::predict(compact, X) : opfc::predict(conventional, X);
}

nlohmann::json to_json(const CompactModel& m) {
  return {{"format_version", kModelFormatVersion},
          {"kind", "compact"},
          {"dims", {{"dim_x", m.dim_x}, {"p", m.p}, {"d", m.d}}},
          {"fingerprint", m.fingerprint},
          {"regressor", to_json(m.regressor)},
          {"gha_state", to_json(m.pca)}};
}

nlohmann::json to_json(const ConventionalModel& m) {
  return {{"format_version", kModelFormatVersion},
          {"kind", "conventional"},
          {"mode", mode_name(m.mode)},
          {"target", target_name(m.target)},
          {"fingerprint", m.fingerprint},
          {"regressor", to_json(m.net)},
          {"y_mean", to_std(m.y_mean)},
          {"y_scale", to_std(m.y_scale)},
          {"nonnegative", m.nonnegative}};
}

TrainedModel model_from_json(const nlohmann::json& j) {
  if (j.value("format_version", 0) != kModelFormatVersion) throw Error("unsupported model format version");
  TrainedModel t;
  t.kind = j.at("kind").get<std::string>();
  if (t.kind == "compact") {
    auto& m = t.compact;
    m.dim_x = j.at("dims").at("dim_x").get<int>();
    m.p = j.at("dims").at("p").get<int>();
    m.d = j.at("dims").at("d").get<int>();
    m.fingerprint = j.at("fingerprint").get<std::string>();
    m.regressor = mlp_from_json(j.at("regressor"));
    m.pca = gha_state_from_json(j.at("gha_state"));
    if (m.regressor.input_dim() != m.dim_x || m.regressor.output_dim() != m.p || m.pca.dim() != m.d ||
        m.pca.components() != m.p)
      throw Error("compact model dimensions are inconsistent");
  } else if (t.kind == "conventional") {
    auto& m = t.conventional;
    m.mode = parse_mode(j.at("mode").get<std::string>());
    m.target = parse_target(j.at("target").get<std::string>());
    m.fingerprint = j.at("fingerprint").get<std::string>();
    m.net = mlp_from_json(j.at("regressor"));
    m.y_mean = vector_from_json(j.at("y_mean"));
    m.y_scale = vector_from_json(j.at("y_scale"));
    m.nonnegative = j.at("nonnegative").get<std::vector<bool>>();
    const auto d = m.net.output_dim();
    if (m.y_mean.size() != d || m.y_scale.size() != d || static_cast<int>(m.nonnegative.size()) != d)
      throw Error("conventional model dimensions are inconsistent");
  } else {
    throw Error("unknown model kind '" + t.kind + "'");
  }
  return t;
}

void write_model(const std::string& path, const nlohmann::json& model) { write_text_file(path, model.dump() + "\n"); }

TrainedModel read_model(const std::string& path) {
  try {
    return model_from_json(nlohmann::json::parse(read_text_file(path)));
  } catch (const nlohmann::json::exception& e) {
    throw Error(path + ": " + e.what());
  }
}

MetricsReport evaluate_predictions(const Network& net, const Dataset& test, const MatrixXd& predictions) {
  check_fingerprint(test, net);
  if (predictions.rows() != static_cast<Eigen::Index>(test.size()) ||
      predictions.cols() != static_cast<Eigen::Index>(dim_y(net)))
    throw Error("evaluate: prediction matrix shape mismatch");
  MetricsReport r;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const Record& rec = test.records[i];
    const Solution s = decode_y(net, predictions.row(static_cast<Eigen::Index>(i)).transpose());
    InstanceMetrics m;
    m.id = rec.id;
    m.gap_pct = optimality_gap(objective(net, s), rec.objective);
    m.max_violation = violations(net, decode_x(net, rec.x), s).max_overall;
    r.instances.push_back(m);
  }
  const double n = static_cast<double>(std::max<std::size_t>(1, r.instances.size()));
  for (const auto& m : r.instances) {
    r.mean_gap += m.gap_pct / n;
    r.mean_max_violation += m.max_violation / n;
  }
  for (const auto& m : r.instances) r.std_gap += (m.gap_pct - r.mean_gap) * (m.gap_pct - r.mean_gap) / n;
  r.std_gap = std::sqrt(r.std_gap);
  return r;
}

MetricsReport evaluate(const TrainedModel& model, const Dataset& test, const Network& net) {
  if (model.fingerprint() != test.fingerprint)
    throw Error("model fingerprint " + model.fingerprint() + " does not match dataset " + test.fingerprint);
  if (model.target() != TrainTarget::primal) throw Error("evaluate: model predicts duals, not primal solutions");
  return evaluate_predictions(net, test, model.predict(test.inputs()));
}

std::string metrics_csv_header() { return "method,opt_gap_mean_pct,opt_gap_std_pct,max_violation_mean_pu\n"; }

std::string metrics_csv_row(const std::string& method, const MetricsReport& r) {
  return method + "," + format_double(r.mean_gap) + "," + format_double(r.std_gap) + "," +
         format_double(r.mean_max_violation) + "\n";
}

std::string instance_metrics_csv(const MetricsReport& r) {
  std::ostringstream os;
  os << "instance_id,gap_pct,max_violation_pu\n";
  for (const auto& m : r.instances) os << m.id << ',' << format_double(m.gap_pct) << ',' << format_double(m.max_violation) << '\n';
  return os.str();
}

}  // namespace opfc
