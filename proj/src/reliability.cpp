#include "rgbt/reliability.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "rgbt/error.hpp"
#include "rgbt/text_io.hpp"

namespace rgbt {

namespace {

constexpr double kDensityFloor = 1e-300;
constexpr std::size_t kDenseUserLimit = 8192;

}  // namespace

FeatureScaler FeatureScaler::fit(std::span<const Vec2> raw) {
  FeatureScaler s;
  if (raw.empty()) return s;
  const double n = static_cast<double>(raw.size());
  for (int c = 0; c < 2; ++c) {
    double mean = 0.0;
    for (const auto& v : raw) mean += v[c];
    mean /= n;
    double var = 0.0;
    for (const auto& v : raw) var += (v[c] - mean) * (v[c] - mean);
    var /= n;
    s.mean[c] = mean;
    s.stddev[c] = std::sqrt(var);
  }
  return s;
}

Vec2 FeatureScaler::apply(const Vec2& raw) const {
  Vec2 out{};
  for (int c = 0; c < 2; ++c)
    out[c] = stddev[c] > 0.0 ? (raw[c] - mean[c]) / stddev[c] : 0.0;
  return out;
}

CooccurrenceIndex::CooccurrenceIndex(const InteractionDataset& train, bool include_self,
                                     kernels::Backend backend)
    : include_self_(include_self), users_(train.num_users()) {
  items_of_user_.resize(train.num_users());
  users_of_item_.resize(train.num_items());
  for (const auto& r : train.records) {
    items_of_user_[r.user].push_back(r.item);
    users_of_item_[r.item].push_back(r.user);
  }
  for (auto& v : items_of_user_) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  }
  for (auto& v : users_of_item_) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  }

  dense_ = users_ <= kDenseUserLimit;
  if (!dense_) return;
  overlap_.assign(users_ * users_, 0);
  // Row u is owned by exactly one iteration, so the parallel loop is race-free
  // and gives the same integers as the serial one.
  auto fill_row = [&](std::size_t u) {
    std::uint32_t* row = overlap_.data() + u * users_;
    for (auto item : items_of_user_[u])
      for (auto other : users_of_item_[item]) ++row[other];
  };
  if (backend == kernels::Backend::kSerial) {
    for (std::size_t u = 0; u < users_; ++u) fill_row(u);
  } else {
#pragma omp parallel for schedule(dynamic, 16)
    for (std::int64_t u = 0; u < static_cast<std::int64_t>(users_); ++u)
      fill_row(static_cast<std::size_t>(u));
  }
}

std::size_t CooccurrenceIndex::overlap(std::size_t a, std::size_t b) const {
  if (dense_) return overlap_[a * users_ + b];
  const auto& x = items_of_user_[a];
  const auto& y = items_of_user_[b];
  std::size_t i = 0, j = 0, count = 0;
  while (i < x.size() && j < y.size() && count <= 1) {
    if (x[i] < y[j]) ++i;
    else if (y[j] < x[i]) ++j;
    else {
      ++count;
      ++i;
      ++j;
    }
  }
  return count;
}

long long CooccurrenceIndex::count(std::size_t user, std::size_t item) const {
  if (item >= users_of_item_.size()) {
    // Items never seen in training have no interacting users.
    return 0;
  }
  if (user >= users_) return 0;
  long long c = 0;
  for (auto other : users_of_item_[item]) {
    if (!include_self_ && other == user) continue;
    if (overlap(user, other) > 1) ++c;
  }
  return c;
}

long long cooccurrence_feature(std::size_t user, std::size_t item, const InteractionDataset& train,
                               bool include_self) {
  if (user >= train.num_users() || item >= train.num_items())
    throw BoundsError("pair (" + std::to_string(user) + ", " + std::to_string(item) + ") out of range");
  return CooccurrenceIndex(train, include_self, kernels::Backend::kSerial).count(user, item);
}

FeatureBatch build_features(std::span<const kernels::Pair> pairs, const Classifier& model,
                            const CooccurrenceIndex& cooccur) {
  FeatureBatch batch;
  batch.features.resize(pairs.size());
  std::vector<Vec2> raw(pairs.size());
  for (std::size_t n = 0; n < pairs.size(); ++n) {
    auto& f = batch.features[n];
    f.score = predict_score(model, pairs[n].first, pairs[n].second);
    f.cooccur = cooccur.count(pairs[n].first, pairs[n].second);
    raw[n] = {f.score, static_cast<double>(f.cooccur)};
  }
  batch.scaler = FeatureScaler::fit(raw);
  for (std::size_t n = 0; n < pairs.size(); ++n) batch.features[n].standardized = batch.scaler.apply(raw[n]);
  return batch;
}

double log_gaussian(const Vec2& x, const Vec2& mu, const Cov2& s) {
  const double det = s.det();
  const double dx = x[0] - mu[0], dy = x[1] - mu[1];
  const double quad = (s.yy * dx * dx - 2.0 * s.xy * dx * dy + s.xx * dy * dy) / det;
  return -std::log(2.0 * std::numbers::pi) - 0.5 * std::log(det) - 0.5 * quad;
}

double component_posterior(const Vec2& x, const GmmParams& g, int k) {
  double dens[2];
  for (int c = 0; c < 2; ++c)
    dens[c] = std::max(g.pi[c] * std::exp(log_gaussian(x, g.mu[c], g.sigma[c])), kDensityFloor);
  return dens[k] / (dens[0] + dens[1]);
}

double reliability_weight(const Vec2& x, const GmmParams& g) {
  return component_posterior(x, g, g.reliable_index);
}

GmmFit fit_gmm(std::span<const Vec2> x, const GmmOptions& options, std::uint64_t /*seed*/) {
  if (x.size() < 4) throw InsufficientDataError("GMM fit needs at least 4 points");
  if (!(options.tol > 0.0)) throw DomainError("tol must be > 0");
  const std::size_t n = x.size();

  GmmFit fit;
  auto& g = fit.params;
  std::size_t hi = 0, lo = 0;
  for (std::size_t i = 1; i < n; ++i) {
    if (x[i][0] > x[hi][0]) hi = i;
    if (x[i][0] < x[lo][0]) lo = i;
  }
  g.mu = {x[hi], x[lo]};
  g.pi = {0.5, 0.5};
  g.sigma = {Cov2{}, Cov2{}};

  std::vector<double> resp(2 * n);
  double prev = 0.0;
  for (int iter = 0; iter < options.max_iter; ++iter) {
    // E-step with log-sum-exp.
    double ll = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double lp[2];
      for (int c = 0; c < 2; ++c)
        lp[c] = (g.pi[c] > 0.0 ? std::log(g.pi[c]) : -INFINITY) + log_gaussian(x[i], g.mu[c], g.sigma[c]);
      const double mx = std::max(lp[0], lp[1]);
      const double lse = mx + std::log(std::exp(lp[0] - mx) + std::exp(lp[1] - mx));
      ll += lse;
      resp[2 * i] = std::exp(lp[0] - lse);
      resp[2 * i + 1] = std::exp(lp[1] - lse);
    }
    ll /= static_cast<double>(n);
    if (!std::isfinite(ll)) throw NumericError("GMM log-likelihood is not finite");
    fit.log_likelihood.push_back(ll);
    if (iter > 0 && std::abs(ll - prev) < options.tol) {
      fit.converged = true;
      break;
    }
    prev = ll;

    // M-step.
    for (int c = 0; c < 2; ++c) {
      double nk = 0.0, mx = 0.0, my = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double r = resp[2 * i + c];
        nk += r;
        mx += r * x[i][0];
        my += r * x[i][1];
      }
      g.pi[c] = nk / static_cast<double>(n);
      if (nk <= 0.0) continue;  // empty component keeps its mean and covariance
      mx /= nk;
      my /= nk;
      double sxx = 0.0, sxy = 0.0, syy = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double r = resp[2 * i + c];
        const double dx = x[i][0] - mx, dy = x[i][1] - my;
        sxx += r * dx * dx;
        sxy += r * dx * dy;
        syy += r * dy * dy;
      }
      g.mu[c] = {mx, my};
      g.sigma[c] = {sxx / nk + options.regularization, sxy / nk, syy / nk + options.regularization};
    }
    fit.iterations = iter + 1;
  }

  const double n0 = g.mu[0][0] * g.mu[0][0] + g.mu[0][1] * g.mu[0][1];
  const double n1 = g.mu[1][0] * g.mu[1][0] + g.mu[1][1] * g.mu[1][1];
  g.reliable_index = n1 > n0 ? 1 : 0;
  return fit;
}

double effective_sample_size(std::span<const double> weights) {
  double sum = 0.0, sq = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw DomainError("weights must be non-negative");
    sum += w;
    sq += w * w;
  }
  if (sq == 0.0) throw DomainError("effective sample size needs a nonzero weight");
  return sum * sum / sq;
}

std::string serialize_gmm(const GmmParams& g, const FeatureScaler* scaler) {
  using text::format_double;
  std::string out;
  out += "pi\t" + format_double(g.pi[0]) + '\t' + format_double(g.pi[1]) + '\n';
  for (int c = 0; c < 2; ++c)
    out += "mu" + std::to_string(c) + '\t' + format_double(g.mu[c][0]) + '\t' + format_double(g.mu[c][1]) + '\n';
  for (int c = 0; c < 2; ++c) {
    const auto& s = g.sigma[c];
    out += "sigma" + std::to_string(c) + '\t' + format_double(s.xx) + '\t' + format_double(s.xy) + '\t' +
           format_double(s.xy) + '\t' + format_double(s.yy) + '\n';
  }
  out += "reliable_index\t" + std::to_string(g.reliable_index) + '\n';
  if (scaler) {
    out += "scaler_mean\t" + format_double(scaler->mean[0]) + '\t' + format_double(scaler->mean[1]) + '\n';
    out += "scaler_std\t" + format_double(scaler->stddev[0]) + '\t' + format_double(scaler->stddev[1]) + '\n';
  }
  return out;
}

GmmParams parse_gmm(std::string_view body, FeatureScaler* scaler) {
  GmmParams g;
  std::size_t pos = 0, line_no = 0;
  int seen = 0;
  while (pos < body.size()) {
    std::size_t end = body.find('\n', pos);
    if (end == std::string_view::npos) end = body.size();
    auto line = text::trim(body.substr(pos, end - pos));
    pos = end + 1;
    ++line_no;
    if (line.empty()) continue;
    const auto f = text::split(line, '\t');
    std::vector<double> v;
    for (std::size_t i = 1; i < f.size(); ++i) {
      double d = 0;
      if (!text::parse_double(f[i], d)) throw ParseError(line_no, "bad number");
      v.push_back(d);
    }
    auto need = [&](std::size_t count) {
      if (v.size() != count) throw ParseError(line_no, "expected " + std::to_string(count) + " values");
    };
    const auto key = f[0];
    if (key == "pi") { need(2); g.pi = {v[0], v[1]}; }
    else if (key == "mu0" || key == "mu1") { need(2); g.mu[key == "mu1"] = {v[0], v[1]}; }
    else if (key == "sigma0" || key == "sigma1") {
      need(4);
      if (v[1] != v[2]) throw ParseError(line_no, "covariance is not symmetric");
      g.sigma[key == "sigma1"] = {v[0], v[1], v[3]};
    } else if (key == "reliable_index") {
      need(1);
      if (v[0] != 0.0 && v[0] != 1.0) throw ParseError(line_no, "reliable_index must be 0 or 1");
      g.reliable_index = static_cast<int>(v[0]);
    } else if (key == "scaler_mean") { need(2); if (scaler) scaler->mean = {v[0], v[1]}; continue; }
    else if (key == "scaler_std") { need(2); if (scaler) scaler->stddev = {v[0], v[1]}; continue; }
    else throw ParseError(line_no, "unknown key '" + std::string(key) + "'");
    ++seen;
  }
  if (seen != 6) throw ParseError(line_no, "incomplete GMM description");
  return g;
}

}  // namespace rgbt
