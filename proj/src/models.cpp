#include "cablecal/models.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>

#include <Eigen/Cholesky>
#include <Eigen/QR>

#include "cablecal/sim.hpp"

namespace cablecal {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

ModelSignature signature_of(const Dataset& d) {
  if (d.rows() == 0) throw EmptyDatasetError("cannot fit a model on an empty dataset");
  d.validate();
  return {d.schema_hash(), d.feature_set, d.dim(), d.input_names(), d.normalized};
}

Eigen::MatrixXd targets(const Dataset& d, OutputMode mode) {
  return mode == OutputMode::OnError ? d.errors() : d.truth;
}

// Design matrix [1, z_active].
Eigen::MatrixXd design(const Eigen::MatrixXd& z, const std::vector<std::size_t>& active) {
  Eigen::MatrixXd a(z.rows(), static_cast<Eigen::Index>(active.size()) + 1);
  a.col(0).setOnes();
  for (std::size_t i = 0; i < active.size(); ++i) a.col(static_cast<Eigen::Index>(i) + 1) = z.col(static_cast<Eigen::Index>(active[i]));
  return a;
}

// Ridge normal equations with an unpenalized first (bias) column.
Eigen::MatrixXd solve_ridge(const Eigen::MatrixXd& a, const Eigen::MatrixXd& y, double ridge,
                            std::vector<std::string>& warnings) {
  if (!(ridge >= 0.0)) throw InvalidArgument("ridge must be >= 0");
  const Eigen::Index p = a.cols();
  Eigen::MatrixXd m = a.transpose() * a;
  for (Eigen::Index i = 1; i < p; ++i) m(i, i) += ridge;
  const Eigen::MatrixXd rhs = a.transpose() * y;

  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() == Eigen::Success && llt.rcond() > 1e-12) {
    Eigen::MatrixXd w = llt.solve(rhs);
    // Two refinement steps recover most of the digits lost to squaring.
    for (int k = 0; k < 2; ++k) w += llt.solve(rhs - m * w);
    return w;
  }
  const std::string msg = "normal equations are singular or ill-conditioned (" + std::to_string(p) +
                          " unknowns); using the minimum-norm least-squares solution";
  warnings.push_back(msg);
  warn(msg);
  if (ridge == 0.0) return a.completeOrthogonalDecomposition().solve(y);
  Eigen::MatrixXd aug = Eigen::MatrixXd::Zero(a.rows() + p - 1, p);
  aug.topRows(a.rows()) = a;
  aug.bottomRightCorner(p - 1, p - 1) = std::sqrt(ridge) * Eigen::MatrixXd::Identity(p - 1, p - 1);
  Eigen::MatrixXd yaug = Eigen::MatrixXd::Zero(aug.rows(), y.cols());
  yaug.topRows(y.rows()) = y;
  return aug.completeOrthogonalDecomposition().solve(yaug);
}

JointVector finish(OutputMode mode, const double* y, const JointVector& reported) {
  if (mode == OutputMode::OnError) return {reported[0] + y[0], reported[1] + y[1], reported[2] + y[2]};
  return {y[0], y[1], y[2]};
}

nlohmann::json vec_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Eigen::VectorXd vec_from(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

nlohmann::json mat_json(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    std::vector<double> row(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index c = 0; c < m.cols(); ++c) row[static_cast<std::size_t>(c)] = m(r, c);
    rows.push_back(row);
  }
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", rows}};
}

Eigen::MatrixXd mat_from(const nlohmann::json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto& data = j.at("data");
  if (static_cast<Eigen::Index>(data.size()) != rows) throw FormatError("model: matrix row count mismatch");
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto row = data[static_cast<std::size_t>(r)].get<std::vector<double>>();
    if (static_cast<Eigen::Index>(row.size()) != cols) throw FormatError("model: matrix column count mismatch");
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = row[static_cast<std::size_t>(c)];
  }
  return m;
}

nlohmann::json standardizer_json(const Standardizer& s) {
  return {{"mean", vec_json(s.mean)}, {"sd", vec_json(s.sd)}, {"constant", s.constant}};
}

Standardizer standardizer_from(const nlohmann::json& j) {
  Standardizer s;
  s.mean = vec_from(j.at("mean"));
  s.sd = vec_from(j.at("sd"));
  s.constant = j.at("constant").get<std::vector<bool>>();
  if (s.sd.size() != s.mean.size() || s.constant.size() != static_cast<std::size_t>(s.mean.size()))
    throw FormatError("model: standardizer length mismatch");
  return s;
}

nlohmann::json penalty_json(const LayerPenalty& p) {
  return {{"kernel_l1", p.kernel_l1}, {"kernel_l2", p.kernel_l2}, {"bias_l2", p.bias_l2}, {"activity_l2", p.activity_l2}};
}

LayerPenalty penalty_from(const nlohmann::json& j) {
  return {j.value("kernel_l1", 0.0), j.value("kernel_l2", 0.0), j.value("bias_l2", 0.0), j.value("activity_l2", 0.0)};
}

thread_local std::vector<double> tl_z;
thread_local std::vector<double> tl_x;
thread_local std::vector<Eigen::VectorXd> tl_scratch;

}  // namespace

// ---------------------------------------------------------------------------

std::string to_string(OutputMode m) { return m == OutputMode::OnError ? "on-error" : "e2e"; }

OutputMode parse_output_mode(const std::string& s) {
  if (s == "on-error" || s == "onerror" || s == "on_error") return OutputMode::OnError;
  if (s == "e2e" || s == "end-to-end" || s == "endtoend") return OutputMode::EndToEnd;
  throw InvalidArgument("unknown output mode '" + s + "' (expected on-error|e2e)");
}

std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::Offset: return "offset";
    case ModelKind::Linear: return "linear";
    case ModelKind::Poly2: return "poly2";
    case ModelKind::Mlp: return "mlp";
  }
  return "?";
}

ModelKind parse_model_kind(const std::string& s) {
  for (ModelKind k : {ModelKind::Offset, ModelKind::Linear, ModelKind::Poly2, ModelKind::Mlp})
    if (to_string(k) == s) return k;
  throw InvalidArgument("unknown model '" + s + "' (expected offset|linear|poly2|mlp)");
}

std::string to_string(ModelFormat f) { return f == ModelFormat::Json ? "json" : "cbor"; }

ModelFormat parse_model_format(const std::string& s) {
  if (s == "json") return ModelFormat::Json;
  if (s == "cbor") return ModelFormat::Cbor;
  throw InvalidArgument("unknown model format '" + s + "' (expected json|cbor)");
}

// ---------------------------------------------------------------------------

Standardizer Standardizer::fit(const Eigen::MatrixXd& x) {
  const NormStats n = NormStats::fit(x);
  return {n.mean, n.sd, n.constant};
}

std::vector<std::size_t> Standardizer::active() const {
  std::vector<std::size_t> a;
  for (std::size_t i = 0; i < constant.size(); ++i)
    if (!constant[i]) a.push_back(i);
  return a;
}

Eigen::MatrixXd Standardizer::apply(const Eigen::MatrixXd& x) const {
  if (x.cols() != mean.size()) throw SchemaMismatch("standardizer width does not match the data");
  Eigen::MatrixXd z = (x.rowwise() - mean.transpose()).array().rowwise() / sd.transpose().array();
  for (std::size_t i = 0; i < constant.size(); ++i)
    if (constant[i]) z.col(static_cast<Eigen::Index>(i)).setZero();
  return z;
}

void Standardizer::apply(const double* x, double* z) const {
  const auto n = mean.size();
  for (Eigen::Index i = 0; i < n; ++i) z[i] = constant[static_cast<std::size_t>(i)] ? 0.0 : (x[i] - mean[i]) / sd[i];
}

// ---------------------------------------------------------------------------

void CalibrationModel::check_compatible(const Dataset& d) const {
  if (d.schema_hash() != sig_.schema_hash)
    throw SchemaMismatch("feature schema hash " + hex64(d.schema_hash()) + " does not match the model's " +
                         hex64(sig_.schema_hash));
  if (d.feature_set != sig_.feature_set)
    throw SchemaMismatch("dataset uses the " + to_string(d.feature_set) + " feature set, model expects " +
                         to_string(sig_.feature_set));
  if (d.dim() != sig_.input_dim) throw SchemaMismatch("dataset input width does not match the model");
  if (d.normalized != sig_.normalized_inputs)
    throw SchemaMismatch(std::string("model was trained on ") + (sig_.normalized_inputs ? "normalized" : "raw") +
                         " inputs");
}

Eigen::MatrixXd CalibrationModel::predict(const Dataset& d) const {
  check_compatible(d);
  Eigen::MatrixXd out(d.inputs.rows(), 3);
  // Row-major copy so each sample's features are contiguous.
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> x = d.inputs;
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const JointVector rep{d.reported(r, 0), d.reported(r, 1), d.reported(r, 2)};
    const JointVector q = predict(x.row(r).data(), rep);
    for (Eigen::Index j = 0; j < 3; ++j) out(r, j) = q[static_cast<std::size_t>(j)];
  }
  return out;
}

// ---------------------------------------------------------------------------

FixedOffsetModel::FixedOffsetModel(const JointVector& offsets, ModelSignature sig) : offsets_(offsets) {
  sig_ = std::move(sig);
  mode_ = OutputMode::OnError;
}

JointVector FixedOffsetModel::predict(const double*, const JointVector& reported) const {
  return reported + offsets_;
}

nlohmann::json FixedOffsetModel::parameters() const { return {{"offsets", offsets_}}; }

FixedOffsetModel fit_offset(const Dataset& train) {
  const auto t0 = Clock::now();
  FixedOffsetModel m(JointVector{}, signature_of(train));
  const Eigen::Vector3d mean = train.errors().colwise().mean().transpose();
  m.offsets_ = JointVector::from(mean);
  m.info_.rows = train.rows();
  m.info_.seconds = seconds_since(t0);
  return m;
}

// ---------------------------------------------------------------------------

JointVector LinearModel::predict(const double* features, const JointVector& reported) const {
  const auto d = weights_.rows() - 1;
  double y[3];
  for (Eigen::Index j = 0; j < 3; ++j) {
    double acc = weights_(0, j);
    const double* w = weights_.col(j).data() + 1;
    for (Eigen::Index i = 0; i < d; ++i) acc += w[i] * features[i];
    y[j] = acc;
  }
  return finish(mode_, y, reported);
}

nlohmann::json LinearModel::parameters() const { return {{"weights", mat_json(weights_)}}; }

LinearModel fit_linear(const Dataset& train, OutputMode mode, double ridge) {
  const auto t0 = Clock::now();
  LinearModel m;
  m.sig_ = signature_of(train);
  m.mode_ = mode;

  const Standardizer in = Standardizer::fit(train.inputs);
  const auto active = in.active();
  const Standardizer out = Standardizer::fit(train.errors());
  // Not out.apply(): a constant error column must keep its value, not be zeroed.
  const Eigen::MatrixXd y =
      (targets(train, mode).rowwise() - out.mean.transpose()).array().rowwise() / out.sd.transpose().array();

  const Eigen::MatrixXd wn = solve_ridge(design(in.apply(train.inputs), active), y, ridge, m.info_.warnings);

  // Fold both standardizations into raw-unit weights.
  const auto d = static_cast<Eigen::Index>(train.dim());
  m.weights_ = Eigen::MatrixXd::Zero(d + 1, 3);
  for (Eigen::Index j = 0; j < 3; ++j) {
    double bias = wn(0, j);
    for (std::size_t k = 0; k < active.size(); ++k) {
      const auto i = static_cast<Eigen::Index>(active[k]);
      const double w = wn(static_cast<Eigen::Index>(k) + 1, j) / in.sd[i];
      m.weights_(i + 1, j) = out.sd[j] * w;
      bias -= w * in.mean[i];
    }
    m.weights_(0, j) = out.mean[j] + out.sd[j] * bias;
  }
  m.info_.rows = train.rows();
  m.info_.seconds = seconds_since(t0);
  return m;
}

// ---------------------------------------------------------------------------

void PolyModel::expand(const double* z, double* out) const {
  std::size_t k = 0;
  out[k++] = 1.0;
  for (std::size_t a : active_) out[k++] = z[a];
  for (std::size_t i = 0; i < active_.size(); ++i)
    for (std::size_t j = i; j < active_.size(); ++j) out[k++] = z[active_[i]] * z[active_[j]];
}

JointVector PolyModel::predict(const double* features, const JointVector& reported) const {
  const auto d = in_.dim();
  const auto e = static_cast<std::size_t>(weights_.rows());
  if (tl_z.size() < d) tl_z.resize(d);
  if (tl_x.size() < e) tl_x.resize(e);
  in_.apply(features, tl_z.data());
  expand(tl_z.data(), tl_x.data());
  double y[3];
  for (Eigen::Index j = 0; j < 3; ++j) {
    const double* w = weights_.col(j).data();
    double acc = 0.0;
    for (std::size_t i = 0; i < e; ++i) acc += w[i] * tl_x[i];
    y[j] = out_.mean[j] + out_.sd[j] * acc;
  }
  return finish(mode_, y, reported);
}

nlohmann::json PolyModel::parameters() const {
  return {{"input", standardizer_json(in_)}, {"target", standardizer_json(out_)}, {"weights", mat_json(weights_)}};
}

PolyModel fit_poly2(const Dataset& train, OutputMode mode, double ridge, bool allow_large) {
  const auto t0 = Clock::now();
  PolyModel m;
  m.sig_ = signature_of(train);
  m.mode_ = mode;
  m.in_ = Standardizer::fit(train.inputs);
  m.active_ = m.in_.active();
  const std::size_t p = m.active_.size();
  if (p > kPoly2MaxInputs && !allow_large)
    throw InvalidArgument("poly2 on " + std::to_string(p) + " inputs expands to " +
                          std::to_string(1 + p + p * (p + 1) / 2) + " features; pass the override to allow it");
  m.out_ = Standardizer::fit(train.errors());
  const Eigen::MatrixXd y =
      (targets(train, mode).rowwise() - m.out_.mean.transpose()).array().rowwise() / m.out_.sd.transpose().array();

  const std::size_t e = 1 + p + p * (p + 1) / 2;
  const Eigen::MatrixXd z = m.in_.apply(train.inputs);
  Eigen::MatrixXd a(z.rows(), static_cast<Eigen::Index>(e));
  std::vector<double> row(e);
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    const Eigen::RowVectorXd zr = z.row(r);
    m.expand(zr.data(), row.data());
    for (std::size_t c = 0; c < e; ++c) a(r, static_cast<Eigen::Index>(c)) = row[c];
  }
  m.weights_ = solve_ridge(a, y, ridge, m.info_.warnings);
  m.info_.rows = train.rows();
  m.info_.seconds = seconds_since(t0);
  return m;
}

// ---------------------------------------------------------------------------

MlpConfig MlpConfig::large() {
  MlpConfig c;
  c.hidden = {600, 500, 400};
  c.hidden_penalty = {1e-5, 1e-4, 1e-4, 1e-5};
  c.output_penalty = {1e-5, 1e-4, 1e-4, 0.0};
  return c;
}

nlohmann::json to_json(const MlpConfig& c) {
  return {{"hidden", c.hidden},
          {"epochs", c.epochs},
          {"learning_rate", c.learning_rate},
          {"batch_size", c.batch_size},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"epsilon", c.epsilon},
          {"hidden_penalty", penalty_json(c.hidden_penalty)},
          {"output_penalty", penalty_json(c.output_penalty)}};
}

MlpConfig mlp_config_from_json(const nlohmann::json& j) {
  MlpConfig c;
  if (j.contains("hidden")) c.hidden = j.at("hidden").get<std::vector<std::size_t>>();
  c.epochs = j.value("epochs", c.epochs);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.epsilon = j.value("epsilon", c.epsilon);
  if (j.contains("hidden_penalty")) c.hidden_penalty = penalty_from(j.at("hidden_penalty"));
  if (j.contains("output_penalty")) c.output_penalty = penalty_from(j.at("output_penalty"));
  return c;
}

JointVector MlpModel::predict(const double* features, const JointVector& reported) const {
  const auto d = in_.dim();
  if (tl_z.size() < d) tl_z.resize(d);
  in_.apply(features, tl_z.data());
  double y[3];
  net_.forward_one(tl_z.data(), y, tl_scratch);
  for (Eigen::Index j = 0; j < 3; ++j) y[j] = out_.mean[j] + out_.sd[j] * y[j];
  return finish(mode_, y, reported);
}

nlohmann::json MlpModel::parameters() const {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : net_.layers()) layers.push_back({{"w", mat_json(l.w)}, {"b", vec_json(l.b)}});
  return {{"input", standardizer_json(in_)},
          {"target", standardizer_json(out_)},
          {"config", to_json(cfg_)},
          {"seed", seed_},
          {"layers", layers}};
}

MlpModel fit_mlp(const Dataset& train, OutputMode mode, const MlpConfig& cfg, std::uint64_t seed) {
  const auto t0 = Clock::now();
  if (cfg.batch_size == 0) throw InvalidArgument("mlp batch size must be > 0");
  if (!(cfg.learning_rate > 0.0)) throw InvalidArgument("mlp learning rate must be > 0");
  MlpModel m;
  m.sig_ = signature_of(train);
  m.mode_ = mode;
  m.cfg_ = cfg;
  m.seed_ = seed;
  m.in_ = Standardizer::fit(train.inputs);
  m.out_ = Standardizer::fit(train.errors());

  const Eigen::MatrixXd x = m.in_.apply(train.inputs).transpose();  // D x N
  const Eigen::MatrixXd y =
      ((targets(train, mode).rowwise() - m.out_.mean.transpose()).array().rowwise() / m.out_.sd.transpose().array())
          .matrix()
          .transpose();  // 3 x N

  auto rng = make_rng(seed, 0x6d6c70ULL);
  m.net_ = Mlp(train.dim(), cfg.hidden, 3, rng);
  Adam adam(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon);

  const auto n = static_cast<std::size_t>(x.cols());
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::vector<Mlp::Layer> grads;
  Eigen::MatrixXd xb, yb;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t b = std::min(cfg.batch_size, n - start);
      xb.resize(x.rows(), static_cast<Eigen::Index>(b));
      yb.resize(3, static_cast<Eigen::Index>(b));
      for (std::size_t k = 0; k < b; ++k) {
        xb.col(static_cast<Eigen::Index>(k)) = x.col(static_cast<Eigen::Index>(order[start + k]));
        yb.col(static_cast<Eigen::Index>(k)) = y.col(static_cast<Eigen::Index>(order[start + k]));
      }
      const double loss = m.net_.loss_and_grad(xb, yb, cfg.hidden_penalty, cfg.output_penalty, grads);
      if (!std::isfinite(loss))
        throw Error("mlp training diverged: loss " + format_double(loss) + " at epoch " + std::to_string(epoch + 1) +
                    ", batch starting at row " + std::to_string(start) + " (learning rate " +
                    format_double(cfg.learning_rate) + ")");
      adam.step(m.net_, grads);
      epoch_loss += loss * static_cast<double>(b);
    }
    m.info_.loss_curve.push_back(epoch_loss / static_cast<double>(n));
  }
  m.info_.rows = train.rows();
  m.info_.seconds = seconds_since(t0);
  return m;
}

std::unique_ptr<CalibrationModel> train_model(const Dataset& train, const TrainOptions& o) {
  switch (o.kind) {
    case ModelKind::Offset: return std::make_unique<FixedOffsetModel>(fit_offset(train));
    case ModelKind::Linear: return std::make_unique<LinearModel>(fit_linear(train, o.mode, o.ridge));
    case ModelKind::Poly2: return std::make_unique<PolyModel>(fit_poly2(train, o.mode, o.ridge, o.allow_large_poly));
    case ModelKind::Mlp: return std::make_unique<MlpModel>(fit_mlp(train, o.mode, o.mlp, o.seed));
  }
  throw InvalidArgument("unknown model kind");
}

// ---------------------------------------------------------------------------

nlohmann::json model_to_json(const CalibrationModel& m, const std::string& manifest_id) {
  const auto& s = m.signature();
  nlohmann::json body;
  body["kind"] = to_string(m.kind());
  body["mode"] = to_string(m.mode());
  body["signature"] = {{"schema_hash", hex64(s.schema_hash)},
                       {"feature_set", to_string(s.feature_set)},
                       {"input_dim", s.input_dim},
                       {"input_names", s.input_names},
                       {"normalized_inputs", s.normalized_inputs}};
  body["fit"] = {{"rows", m.fit_info().rows}, {"warnings", m.fit_info().warnings}, {"loss_curve", m.fit_info().loss_curve}};
  body["parameters"] = m.parameters();
  const std::string canonical = body.dump();

  nlohmann::json env;
  env["format"] = "cablecal-model";
  env["version"] = kModelFormatVersion;
  env["kind"] = body["kind"];
  env["mode"] = body["mode"];
  env["schema_hash"] = hex64(s.schema_hash);
  env["manifest_id"] = manifest_id;
  env["checksum"] = hex64(fnv1a64(canonical.data(), canonical.size()));
  env["model"] = std::move(body);
  return env;
}

std::unique_ptr<CalibrationModel> model_from_json(const nlohmann::json& env) {
  try {
    if (env.value("format", std::string()) != "cablecal-model") throw FormatError("not a cablecal model file");
    const int version = env.at("version").get<int>();
    if (version != kModelFormatVersion)
      throw FormatError("model format version " + std::to_string(version) + " is not supported (expected " +
                        std::to_string(kModelFormatVersion) + ")");
    const auto& body = env.at("model");
    const std::string canonical = body.dump();
    if (parse_hex64(env.at("checksum").get<std::string>()) != fnv1a64(canonical.data(), canonical.size()))
      throw FormatError("model payload checksum mismatch (file damaged or edited)");
    const auto& sj = body.at("signature");
    if (env.at("schema_hash") != sj.at("schema_hash")) throw SchemaMismatch("model schema hash mismatch");
    if (env.at("kind") != body.at("kind") || env.at("mode") != body.at("mode"))
      throw FormatError("model header disagrees with its payload");

    const ModelKind kind = parse_model_kind(body.at("kind").get<std::string>());
    const OutputMode mode = parse_output_mode(body.at("mode").get<std::string>());
    ModelSignature sig;
    sig.schema_hash = parse_hex64(sj.at("schema_hash").get<std::string>());
    sig.feature_set = parse_feature_set(sj.at("feature_set").get<std::string>());
    sig.input_dim = sj.at("input_dim").get<std::size_t>();
    sig.input_names = sj.at("input_names").get<std::vector<std::string>>();
    sig.normalized_inputs = sj.value("normalized_inputs", false);
    FitInfo info;
    info.rows = body.at("fit").value("rows", std::size_t{0});
    info.warnings = body.at("fit").value("warnings", std::vector<std::string>{});
    info.loss_curve = body.at("fit").value("loss_curve", std::vector<double>{});
    const auto& p = body.at("parameters");

    std::unique_ptr<CalibrationModel> out;
    switch (kind) {
      case ModelKind::Offset: {
        auto m = std::make_unique<FixedOffsetModel>(p.at("offsets").get<JointVector>(), sig);
        out = std::move(m);
        break;
      }
      case ModelKind::Linear: {
        auto m = std::make_unique<LinearModel>();
        m->weights_ = mat_from(p.at("weights"));
        if (static_cast<std::size_t>(m->weights_.rows()) != sig.input_dim + 1 || m->weights_.cols() != 3)
          throw FormatError("linear model weights have the wrong shape");
        out = std::move(m);
        break;
      }
      case ModelKind::Poly2: {
        auto m = std::make_unique<PolyModel>();
        m->in_ = standardizer_from(p.at("input"));
        m->out_ = standardizer_from(p.at("target"));
        m->active_ = m->in_.active();
        m->weights_ = mat_from(p.at("weights"));
        const std::size_t q = m->active_.size();
        if (m->in_.dim() != sig.input_dim || static_cast<std::size_t>(m->weights_.rows()) != 1 + q + q * (q + 1) / 2 ||
            m->weights_.cols() != 3 || m->out_.dim() != 3)
          throw FormatError("poly2 model parameters have the wrong shape");
        out = std::move(m);
        break;
      }
      case ModelKind::Mlp: {
        auto m = std::make_unique<MlpModel>();
        m->in_ = standardizer_from(p.at("input"));
        m->out_ = standardizer_from(p.at("target"));
        m->cfg_ = mlp_config_from_json(p.at("config"));
        m->seed_ = p.at("seed").get<std::uint64_t>();
        for (const auto& lj : p.at("layers")) m->net_.layers().push_back({mat_from(lj.at("w")), vec_from(lj.at("b"))});
        const auto& ls = m->net_.layers();
        if (ls.empty() || m->in_.dim() != sig.input_dim || static_cast<std::size_t>(ls.front().w.cols()) != sig.input_dim ||
            ls.back().w.rows() != 3 || m->out_.dim() != 3)
          throw FormatError("mlp model parameters have the wrong shape");
        for (std::size_t i = 0; i < ls.size(); ++i) {
          if (ls[i].b.size() != ls[i].w.rows() || (i > 0 && ls[i].w.cols() != ls[i - 1].w.rows()))
            throw FormatError("mlp layer shapes do not chain");
        }
        out = std::move(m);
        break;
      }
    }
    out->mode_ = mode;
    out->sig_ = std::move(sig);
    out->info_ = std::move(info);
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed model file: ") + e.what());
  }
}

std::vector<std::uint8_t> serialize(const CalibrationModel& m, ModelFormat format, const std::string& manifest_id) {
  const auto j = model_to_json(m, manifest_id);
  if (format == ModelFormat::Cbor) return nlohmann::json::to_cbor(j);
  const std::string s = j.dump(1) + "\n";
  return {s.begin(), s.end()};
}

std::unique_ptr<CalibrationModel> deserialize(const std::vector<std::uint8_t>& bytes) {
  if (bytes.empty()) throw FormatError("empty model file");
  nlohmann::json j;
  try {
    // JSON files start with '{'; CBOR maps start with a major-type-5 byte (0xa0..0xbf).
    j = bytes.front() == '{' ? nlohmann::json::parse(bytes.begin(), bytes.end()) : nlohmann::json::from_cbor(bytes);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("cannot decode model file: ") + e.what());
  }
  return model_from_json(j);
}

std::unique_ptr<CalibrationModel> deserialize_expecting(const std::vector<std::uint8_t>& bytes, OutputMode mode,
                                                        std::uint64_t schema_hash) {
  auto m = deserialize(bytes);
  if (m->mode() != mode)
    throw SchemaMismatch("model file holds a " + to_string(m->mode()) + " model, expected " + to_string(mode));
  if (m->signature().schema_hash != schema_hash)
    throw SchemaMismatch("model file schema hash " + hex64(m->signature().schema_hash) + " does not match " +
                         hex64(schema_hash));
  return m;
}

void save_model(const CalibrationModel& m, const std::filesystem::path& path, ModelFormat format,
                const std::string& manifest_id) {
  const auto bytes = serialize(m, format, manifest_id);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::unique_ptr<CalibrationModel> load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open model file " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

}  // namespace cablecal
