#include "rgbt/noise.hpp"

#include <cmath>

#include "rgbt/error.hpp"
#include "rgbt/rng.hpp"
#include "rgbt/text_io.hpp"

namespace rgbt {

namespace {

void check_noise_args(int classes, double eta) {
  if (classes < 2) throw DomainError("transition matrix needs K >= 2");
  if (!(eta >= 0.0 && eta < 1.0)) throw DomainError("noise rate must lie in [0, 1)");
}

}  // namespace

TransitionMatrix::TransitionMatrix(int classes)
    : classes_(classes), entries_(static_cast<std::size_t>(classes) * classes, 0.0) {
  if (classes < 1) throw DomainError("transition matrix needs K >= 1");
}

TransitionMatrix::TransitionMatrix(int classes, std::vector<double> entries)
    : classes_(classes), entries_(std::move(entries)) {
  if (entries_.size() != static_cast<std::size_t>(classes) * classes)
    throw DimensionError("transition matrix entries do not match K x K");
}

TransitionMatrix TransitionMatrix::identity(int classes) {
  TransitionMatrix t(classes);
  for (int i = 0; i < classes; ++i) t(i, i) = 1.0;
  return t;
}

TransitionMatrix TransitionMatrix::uniform(int classes) {
  return TransitionMatrix(classes, std::vector<double>(static_cast<std::size_t>(classes) * classes,
                                                       1.0 / classes));
}

bool TransitionMatrix::is_row_stochastic(double tol) const {
  for (int i = 0; i < classes_; ++i) {
    double sum = 0.0;
    for (double v : row(i)) {
      if (!(v >= 0.0)) return false;
      sum += v;
    }
    if (std::abs(sum - 1.0) > tol) return false;
  }
  return true;
}

TransitionMatrix symmetric_matrix(int classes, double eta) {
  check_noise_args(classes, eta);
  TransitionMatrix t(classes);
  const double off = eta / (classes - 1);
  for (int i = 0; i < classes; ++i)
    for (int j = 0; j < classes; ++j) t(i, j) = (i == j) ? 1.0 - eta : off;
  return t;
}

TransitionMatrix pairflip_matrix(int classes, double eta) {
  check_noise_args(classes, eta);
  TransitionMatrix t(classes);
  for (int i = 0; i < classes; ++i) {
    const int target = (i == 0) ? classes - 1 : i - 1;
    t(i, i) += 1.0 - eta;
    t(i, target) += eta;
  }
  return t;
}

TransitionMatrix noise_matrix(const NoiseSpec& spec) {
  return spec.kind == NoiseKind::kSymmetric ? symmetric_matrix(spec.classes, spec.eta)
                                            : pairflip_matrix(spec.classes, spec.eta);
}

std::vector<int> inject_noise(std::span<const int> labels, const TransitionMatrix& t,
                              std::uint64_t seed) {
  const int k = t.classes();
  CounterRng rng(seed, Stream::kNoise);
  std::vector<int> out;
  out.reserve(labels.size());
  for (int label : labels) {
    if (label < 1 || label > k) throw DomainError("label outside 1..K");
    const auto row = t.row(label - 1);
    const double u = rng.uniform();
    double acc = 0.0;
    int drawn = k;
    for (int j = 0; j < k; ++j) {
      acc += row[j];
      if (u < acc) {
        drawn = j + 1;
        break;
      }
    }
    // Rounding can leave acc slightly below 1; fall back to the last class
    // with positive mass.
    if (drawn == k && row[k - 1] == 0.0) {
      for (int j = k - 1; j >= 0; --j)
        if (row[j] > 0.0) {
          drawn = j + 1;
          break;
        }
    }
    out.push_back(drawn);
  }
  return out;
}

double l1_distance(const TransitionMatrix& a, const TransitionMatrix& b) {
  if (a.classes() != b.classes()) throw DimensionError("matrix sizes differ");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.entries().size(); ++i)
    sum += std::abs(a.entries()[i] - b.entries()[i]);
  return sum;
}

double l1_matrix_error(std::span<const TransitionMatrix> estimates,
                       std::span<const TransitionMatrix> truths) {
  if (estimates.size() != truths.size())
    throw DimensionError("estimate and truth lists differ in length");
  if (estimates.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < estimates.size(); ++i) total += l1_distance(estimates[i], truths[i]);
  return total / static_cast<double>(estimates.size());
}

std::string serialize_matrix(const TransitionMatrix& t) {
  std::string out;
  for (int i = 0; i < t.classes(); ++i) {
    const auto r = t.row(i);
    out += text::join(std::vector<double>(r.begin(), r.end()), '\t');
    out += '\n';
  }
  return out;
}

TransitionMatrix parse_matrix(std::string_view body) {
  std::vector<double> entries;
  std::size_t rows = 0, cols = 0, pos = 0, line_no = 0;
  while (pos < body.size()) {
    std::size_t end = body.find('\n', pos);
    if (end == std::string_view::npos) end = body.size();
    auto line = text::trim(body.substr(pos, end - pos));
    pos = end + 1;
    ++line_no;
    if (line.empty()) continue;
    const auto fields = text::split(line, '\t');
    if (rows == 0) cols = fields.size();
    if (fields.size() != cols) throw ParseError(line_no, "ragged matrix row");
    for (auto f : fields) {
      double v = 0;
      if (!text::parse_double(f, v)) throw ParseError(line_no, "bad matrix entry");
      entries.push_back(v);
    }
    ++rows;
  }
  if (rows != cols) throw DimensionError("matrix is not square");
  return TransitionMatrix(static_cast<int>(rows), std::move(entries));
}

NoiseKind parse_noise_kind(std::string_view name) {
  if (name == "symmetric") return NoiseKind::kSymmetric;
  if (name == "pairflip") return NoiseKind::kPairflip;
  throw ConfigError("noise.kind", "unknown noise kind '" + std::string(name) + "'");
}

std::string_view noise_kind_name(NoiseKind kind) {
  return kind == NoiseKind::kSymmetric ? "symmetric" : "pairflip";
}

}  // namespace rgbt
