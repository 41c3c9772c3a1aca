#include "rgbt/backbone.hpp"

#include <algorithm>
#include <cmath>

#include "rgbt/error.hpp"
#include "rgbt/rng.hpp"
#include "rgbt/text_io.hpp"

namespace rgbt {

Mlp Mlp::zeros(std::size_t inputs, std::size_t hidden, std::size_t outputs) {
  Mlp m;
  m.inputs = inputs;
  m.hidden = hidden;
  m.outputs = outputs;
  m.w1.assign(hidden * inputs, 0.0);
  m.b1.assign(hidden, 0.0);
  m.w2.assign(outputs * hidden, 0.0);
  m.b2.assign(outputs, 0.0);
  return m;
}

void Mlp::initialize(CounterRng& rng) {
  const double s1 = 1.0 / std::sqrt(static_cast<double>(inputs));
  const double s2 = 1.0 / std::sqrt(static_cast<double>(hidden));
  for (auto& v : w1) v = s1 * rng.normal();
  for (auto& v : w2) v = s2 * rng.normal();
  std::fill(b1.begin(), b1.end(), 0.0);
  std::fill(b2.begin(), b2.end(), 0.0);
}

void Mlp::hidden_forward(std::span<const double> x, std::span<double> act) const {
  for (std::size_t h = 0; h < hidden; ++h) {
    const double* row = w1.data() + h * inputs;
    double z = b1[h];
    for (std::size_t j = 0; j < inputs; ++j) z += row[j] * x[j];
    act[h] = tanh_activation(z);
  }
}

void Mlp::output_forward(std::span<const double> act, std::size_t first, std::size_t count,
                         std::span<double> logits) const {
  for (std::size_t o = 0; o < count; ++o) {
    const double* row = w2.data() + (first + o) * hidden;
    double z = b2[first + o];
    for (std::size_t h = 0; h < hidden; ++h) z += row[h] * act[h];
    logits[o] = z;
  }
}

void Mlp::forward(std::span<const double> x, std::span<double> act,
                  std::span<double> logits) const {
  hidden_forward(x, act);
  output_forward(act, 0, outputs, logits);
}

void Mlp::backward(std::span<const double> x, std::span<const double> act, std::size_t first,
                   std::span<const double> dlogits, Mlp& grad, std::span<double> dx) const {
  // dz_h for the hidden pre-activation, held on the stack for small widths.
  std::vector<double> dpre(hidden, 0.0);
  for (std::size_t o = 0; o < dlogits.size(); ++o) {
    const double d = dlogits[o];
    if (d == 0.0) continue;
    const std::size_t out = first + o;
    grad.b2[out] += d;
    double* grow = grad.w2.data() + out * hidden;
    const double* wrow = w2.data() + out * hidden;
    for (std::size_t h = 0; h < hidden; ++h) {
      grow[h] += d * act[h];
      dpre[h] += d * wrow[h];
    }
  }
  for (std::size_t h = 0; h < hidden; ++h) dpre[h] *= 1.0 - act[h] * act[h];

  if (!dx.empty()) std::fill(dx.begin(), dx.end(), 0.0);
  for (std::size_t h = 0; h < hidden; ++h) {
    const double d = dpre[h];
    if (d == 0.0) continue;
    grad.b1[h] += d;
    double* grow = grad.w1.data() + h * inputs;
    const double* wrow = w1.data() + h * inputs;
    for (std::size_t j = 0; j < inputs; ++j) grow[j] += d * x[j];
    if (!dx.empty())
      for (std::size_t j = 0; j < inputs; ++j) dx[j] += d * wrow[j];
  }
}

void Mlp::add(const Mlp& other) {
  auto acc = [](std::vector<double>& a, const std::vector<double>& b) {
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
  };
  acc(w1, other.w1);
  acc(b1, other.b1);
  acc(w2, other.w2);
  acc(b2, other.b2);
}

void Mlp::fill(double value) {
  for (auto* v : {&w1, &b1, &w2, &b2}) std::fill(v->begin(), v->end(), value);
}

void Mlp::append_views(const std::string& prefix, std::vector<TensorView>& out) {
  out.push_back({prefix + ".w1", {hidden, inputs}, w1});
  out.push_back({prefix + ".b1", {hidden}, b1});
  out.push_back({prefix + ".w2", {outputs, hidden}, w2});
  out.push_back({prefix + ".b2", {outputs}, b2});
}

void Mlp::append_views(const std::string& prefix, std::vector<ConstTensorView>& out) const {
  out.push_back({prefix + ".w1", {hidden, inputs}, w1});
  out.push_back({prefix + ".b1", {hidden}, b1});
  out.push_back({prefix + ".w2", {outputs, hidden}, w2});
  out.push_back({prefix + ".b2", {outputs}, b2});
}

void Embeddings::feature(std::size_t u, std::size_t i, std::span<double> out) const {
  const auto p = user(u);
  const auto q = item(i);
  std::copy(p.begin(), p.end(), out.begin());
  std::copy(q.begin(), q.end(), out.begin() + static_cast<std::ptrdiff_t>(dim));
}

void Embeddings::check_indices(std::size_t u, std::size_t i) const {
  if (u >= users) throw BoundsError("user index " + std::to_string(u) + " out of range");
  if (i >= items) throw BoundsError("item index " + std::to_string(i) + " out of range");
}

Classifier Classifier::zeros_like() const {
  Classifier g;
  g.classes = classes;
  g.embeddings.users = embeddings.users;
  g.embeddings.items = embeddings.items;
  g.embeddings.dim = embeddings.dim;
  g.embeddings.user_vecs.assign(embeddings.user_vecs.size(), 0.0);
  g.embeddings.item_vecs.assign(embeddings.item_vecs.size(), 0.0);
  g.head = Mlp::zeros(head.inputs, head.hidden, head.outputs);
  return g;
}

void Classifier::add(const Classifier& other) {
  for (std::size_t i = 0; i < embeddings.user_vecs.size(); ++i)
    embeddings.user_vecs[i] += other.embeddings.user_vecs[i];
  for (std::size_t i = 0; i < embeddings.item_vecs.size(); ++i)
    embeddings.item_vecs[i] += other.embeddings.item_vecs[i];
  head.add(other.head);
}

std::vector<TensorView> Classifier::tensors() {
  std::vector<TensorView> out;
  out.push_back({"embedding.user", {embeddings.users, embeddings.dim}, embeddings.user_vecs});
  out.push_back({"embedding.item", {embeddings.items, embeddings.dim}, embeddings.item_vecs});
  head.append_views("head", out);
  return out;
}

std::vector<ConstTensorView> Classifier::tensors() const {
  std::vector<ConstTensorView> out;
  out.push_back({"embedding.user", {embeddings.users, embeddings.dim}, embeddings.user_vecs});
  out.push_back({"embedding.item", {embeddings.items, embeddings.dim}, embeddings.item_vecs});
  head.append_views("head", out);
  return out;
}

TransitionNet TransitionNet::zeros_like() const {
  return {Mlp::zeros(net.inputs, net.hidden, net.outputs), classes};
}

std::vector<TensorView> TransitionNet::tensors() {
  std::vector<TensorView> out;
  net.append_views("transition", out);
  return out;
}

std::vector<ConstTensorView> TransitionNet::tensors() const {
  std::vector<ConstTensorView> out;
  net.append_views("transition", out);
  return out;
}

ModelBundle initialize_model(const ModelShape& shape, std::uint64_t seed) {
  if (shape.dim < 1) throw DomainError("embedding dimension must be >= 1");
  if (shape.classes < 2) throw DomainError("need K >= 2");
  ModelBundle m;
  const std::size_t d = shape.dim;
  const std::size_t k = static_cast<std::size_t>(shape.classes);

  auto& emb = m.classifier.embeddings;
  emb.users = shape.users;
  emb.items = shape.items;
  emb.dim = d;
  emb.user_vecs.resize(shape.users * d);
  emb.item_vecs.resize(shape.items * d);

  CounterRng rng(seed, Stream::kInit);
  for (auto& v : emb.user_vecs) v = shape.embedding_scale * rng.normal();
  for (auto& v : emb.item_vecs) v = shape.embedding_scale * rng.normal();

  m.classifier.classes = shape.classes;
  m.classifier.head = Mlp::zeros(2 * d, 2 * d, k);
  m.classifier.head.initialize(rng);

  m.transition.classes = shape.classes;
  m.transition.net = Mlp::zeros(2 * d, 2 * d, k * k);
  m.transition.net.initialize(rng);
  const double p = shape.transition_prior;
  if (!(p >= 0.0 && p < 1.0)) throw DomainError("transition prior must lie in [0, 1)");
  if (p > 1.0 / static_cast<double>(k)) {
    const double diag = std::log(p * static_cast<double>(k - 1) / (1.0 - p));
    for (std::size_t r = 0; r < k; ++r) m.transition.net.b2[r * k + r] = diag;
  }
  return m;
}

void softmax(std::span<const double> logits, std::span<double> out) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - mx);
    sum += out[i];
  }
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] /= sum;
}

std::vector<double> predict_posterior(const Classifier& model, std::size_t u, std::size_t i) {
  model.embeddings.check_indices(u, i);
  std::vector<double> x(2 * model.embeddings.dim);
  model.embeddings.feature(u, i, x);
  std::vector<double> act(model.head.hidden), logits(model.head.outputs), out(model.head.outputs);
  model.head.forward(x, act, logits);
  softmax(logits, out);
  return out;
}

double predict_score(const Classifier& model, std::size_t u, std::size_t i) {
  model.embeddings.check_indices(u, i);
  const auto p = model.embeddings.user(u);
  const auto q = model.embeddings.item(i);
  double s = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) s += p[k] * q[k];
  return s;
}

TransitionMatrix predict_transition(const TransitionNet& theta, std::span<const double> feature) {
  if (feature.size() != theta.net.inputs)
    throw DimensionError("feature has " + std::to_string(feature.size()) + " entries, expected " +
                         std::to_string(theta.net.inputs));
  const int k = theta.classes;
  std::vector<double> act(theta.net.hidden), logits(theta.net.outputs);
  theta.net.forward(feature, act, logits);
  std::vector<double> entries(logits.size());
  for (int r = 0; r < k; ++r) {
    const auto off = static_cast<std::size_t>(r) * k;
    softmax(std::span<const double>(logits).subspan(off, k), std::span<double>(entries).subspan(off, k));
  }
  return TransitionMatrix(k, std::move(entries));
}

Optimizer::Optimizer(OptimizerConfig config) : config_(config) {
  if (!(config_.learning_rate > 0.0)) throw DomainError("learning rate must be > 0");
}

void Optimizer::apply(std::span<const TensorView> params, std::span<const ConstTensorView> grads) {
  if (params.size() != grads.size()) throw DimensionError("parameter/gradient count mismatch");
  for (std::size_t t = 0; t < params.size(); ++t)
    if (params[t].shape != grads[t].shape || params[t].data.size() != grads[t].data.size())
      throw DimensionError("shape mismatch for " + params[t].name);

  ++steps_;
  const double lr = config_.learning_rate;
  if (config_.kind == OptimizerConfig::Kind::kSgd) {
    for (std::size_t t = 0; t < params.size(); ++t)
      for (std::size_t i = 0; i < params[t].data.size(); ++i) params[t].data[i] -= lr * grads[t].data[i];
    return;
  }

  if (first_.empty()) {
    for (const auto& p : params) {
      first_.emplace_back(p.data.size(), 0.0);
      second_.emplace_back(p.data.size(), 0.0);
    }
  }
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  for (std::size_t t = 0; t < params.size(); ++t) {
    auto& m = first_[t];
    auto& v = second_[t];
    auto p = params[t].data;
    auto g = grads[t].data;
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * g[i];
      v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
      p[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + config_.epsilon);
    }
  }
}

double finite_difference_check(const LossFunction& loss, std::span<const double> params,
                               double epsilon) {
  if (!(epsilon > 0.0 && epsilon <= 1e-2)) throw DomainError("epsilon must lie in (0, 1e-2]");
  std::vector<double> analytic(params.size(), 0.0);
  const double base = loss(params, &analytic);
  if (!std::isfinite(base)) throw NumericError("loss is not finite");

  std::vector<double> probe(params.begin(), params.end());
  double worst = 0.0;
  for (std::size_t i = 0; i < probe.size(); ++i) {
    const double saved = probe[i];
    probe[i] = saved + epsilon;
    const double up = loss(probe, nullptr);
    probe[i] = saved - epsilon;
    const double down = loss(probe, nullptr);
    probe[i] = saved;
    if (!std::isfinite(up) || !std::isfinite(down)) throw NumericError("loss is not finite");
    const double central = (up - down) / (2.0 * epsilon);
    const double rel =
        std::abs(analytic[i] - central) / (std::abs(analytic[i]) + std::abs(central) + 1e-12);
    worst = std::max(worst, rel);
  }
  return worst;
}

namespace {

void write_tensor(std::string& out, const ConstTensorView& t) {
  out += "tensor\t" + t.name + '\t' + std::to_string(t.shape.size());
  for (auto s : t.shape) out += '\t' + std::to_string(s);
  out += '\n';
  const std::size_t cols = t.shape.empty() ? 1 : t.shape.back();
  for (std::size_t i = 0; i < t.data.size(); ++i) {
    out += text::format_double(t.data[i]);
    out += ((i + 1) % cols == 0) ? '\n' : '\t';
  }
  if (t.data.empty()) out += '\n';
}

}  // namespace

std::string serialize_checkpoint(const ModelBundle& model) {
  std::string out = "rgbt-checkpoint\tclasses\t" + std::to_string(model.classifier.classes) + '\n';
  for (const auto& t : model.classifier.tensors()) write_tensor(out, t);
  for (const auto& t : model.transition.tensors()) write_tensor(out, t);
  return out;
}

ModelBundle parse_checkpoint(std::string_view body) {
  struct Parsed {
    std::vector<std::size_t> shape;
    std::vector<double> values;
  };
  std::vector<std::pair<std::string, Parsed>> tensors;
  int classes = 0;

  std::size_t pos = 0, line_no = 0;
  Parsed* current = nullptr;
  std::size_t expected = 0;
  while (pos < body.size()) {
    std::size_t end = body.find('\n', pos);
    if (end == std::string_view::npos) end = body.size();
    auto line = body.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (text::trim(line).empty()) continue;
    const auto fields = text::split(line, '\t');
    if (line_no == 1) {
      long long k = 0;
      if (fields.size() != 3 || fields[0] != "rgbt-checkpoint" || !text::parse_int(fields[2], k))
        throw ParseError(line_no, "missing checkpoint header");
      classes = static_cast<int>(k);
      continue;
    }
    if (fields[0] == "tensor") {
      if (current && current->values.size() != expected)
        throw ParseError(line_no, "tensor has too few values");
      if (fields.size() < 3) throw ParseError(line_no, "bad tensor header");
      long long rank = 0;
      if (!text::parse_int(fields[2], rank) || rank < 0 ||
          fields.size() != static_cast<std::size_t>(3 + rank))
        throw ParseError(line_no, "bad tensor rank");
      Parsed p;
      expected = 1;
      for (long long r = 0; r < rank; ++r) {
        long long s = 0;
        if (!text::parse_int(fields[3 + r], s) || s < 0) throw ParseError(line_no, "bad shape");
        p.shape.push_back(static_cast<std::size_t>(s));
        expected *= static_cast<std::size_t>(s);
      }
      tensors.emplace_back(std::string(fields[1]), std::move(p));
      current = &tensors.back().second;
      continue;
    }
    if (!current) throw ParseError(line_no, "values before tensor header");
    for (auto f : fields) {
      double v = 0;
      if (!text::parse_double(f, v)) throw ParseError(line_no, "bad tensor value");
      current->values.push_back(v);
    }
    if (current->values.size() > expected) throw ParseError(line_no, "tensor has too many values");
  }
  if (current && current->values.size() != expected)
    throw ParseError(line_no, "tensor has too few values");

  auto get = [&](const std::string& name) -> Parsed& {
    for (auto& [n, p] : tensors)
      if (n == name) return p;
    throw ParseError(line_no, "checkpoint lacks tensor " + name);
  };
  auto& user = get("embedding.user");
  auto& item = get("embedding.item");
  if (user.shape.size() != 2 || item.shape.size() != 2 || user.shape[1] != item.shape[1])
    throw DimensionError("embedding shapes disagree");

  ModelShape shape;
  shape.users = user.shape[0];
  shape.items = item.shape[0];
  shape.dim = user.shape[1];
  shape.classes = classes;
  ModelBundle m;
  m.classifier.classes = classes;
  m.classifier.embeddings = {shape.users, shape.items, shape.dim, user.values, item.values};
  const std::size_t d = shape.dim, k = static_cast<std::size_t>(classes);
  m.classifier.head = Mlp::zeros(2 * d, 2 * d, k);
  m.transition.classes = classes;
  m.transition.net = Mlp::zeros(2 * d, 2 * d, k * k);

  auto load = [&](std::vector<TensorView> views) {
    for (auto& v : views) {
      auto& p = get(v.name);
      if (p.shape != v.shape) throw DimensionError("shape mismatch for " + v.name);
      std::copy(p.values.begin(), p.values.end(), v.data.begin());
    }
  };
  load(m.classifier.tensors());
  load(m.transition.tensors());
  return m;
}

}  // namespace rgbt
