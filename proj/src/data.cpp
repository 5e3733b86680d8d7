#include "massl/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string_view>

#include "massl/errors.hpp"

namespace massl {

namespace {

constexpr std::uint64_t kCentersStream = 0x63656e74ULL;
constexpr std::uint64_t kTrainStream = 0x74726169ULL;
constexpr std::uint64_t kTestStream = 0x74657374ULL;
constexpr std::uint64_t kViewStream = 0x76696577ULL;
constexpr std::uint64_t kShuffleStream = 0x73687566ULL;

void validate_blobs(int classes, std::size_t per_class, std::size_t dim, double separation,
                    double noise) {
  if (classes < 2 || per_class < 1 || dim < 2 || !(separation > 0.0) || !(noise >= 0.0)) {
    fail(ErrorKind::InvalidShape, "blobs need C >= 2, per_class >= 1, d >= 2, separation > 0, noise >= 0");
  }
}

Mat draw_centers(int classes, std::size_t dim, double separation, std::uint64_t seed) {
  Rng rng = make_rng(seed, {kCentersStream});
  Mat centers(classes, static_cast<Eigen::Index>(dim));
  for (Eigen::Index c = 0; c < centers.rows(); ++c) {
    double n = 0.0;
    do {
      for (Eigen::Index j = 0; j < centers.cols(); ++j) centers(c, j) = standard_normal(rng);
      n = centers.row(c).norm();
    } while (n <= 1e-12);
    centers.row(c) *= separation / n;
  }
  return centers;
}

Dataset draw_points(const Mat& centers, std::size_t per_class, double noise, Rng& rng) {
  const auto classes = static_cast<int>(centers.rows());
  Dataset d;
  d.num_classes = classes;
  d.features.resize(static_cast<Eigen::Index>(per_class) * classes, centers.cols());
  d.labels.reserve(per_class * static_cast<std::size_t>(classes));
  Eigen::Index r = 0;
  for (int c = 0; c < classes; ++c) {
    for (std::size_t i = 0; i < per_class; ++i, ++r) {
      for (Eigen::Index j = 0; j < centers.cols(); ++j) {
        d.features(r, j) = centers(c, j) + (noise > 0.0 ? noise * standard_normal(rng) : 0.0);
      }
      d.labels.push_back(c);
    }
  }
  return d;
}

std::vector<std::string_view> split_cells(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    std::string_view cell = line.substr(start, comma == std::string_view::npos ? line.npos : comma - start);
    while (!cell.empty() && (cell.front() == ' ' || cell.front() == '\t')) cell.remove_prefix(1);
    while (!cell.empty() && (cell.back() == ' ' || cell.back() == '\t' || cell.back() == '\r')) {
      cell.remove_suffix(1);
    }
    cells.push_back(cell);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return cells;
}

bool parse_double(std::string_view s, double& out) {
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size() && std::isfinite(out);
}

bool parse_label(std::string_view s, int& out) {
  if (s.empty()) return false;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size() && out >= 0;
}

}  // namespace

Dataset make_blobs(int classes, std::size_t per_class, std::size_t dim, double separation,
                   double noise, std::uint64_t seed) {
  validate_blobs(classes, per_class, dim, separation, noise);
  const Mat centers = draw_centers(classes, dim, separation, seed);
  Rng rng = make_rng(seed, {kTrainStream});
  return draw_points(centers, per_class, noise, rng);
}

std::pair<Dataset, Dataset> make_blob_splits(const BlobSpec& spec) {
  validate_blobs(spec.classes, spec.per_class, spec.dim, spec.separation, spec.noise);
  const Mat centers = draw_centers(spec.classes, spec.dim, spec.separation, spec.seed);
  Rng train_rng = make_rng(spec.seed, {kTrainStream});
  Rng test_rng = make_rng(spec.seed, {kTestStream});
  Dataset train = draw_points(centers, spec.per_class, spec.noise, train_rng);
  Dataset test = spec.test_per_class > 0 ? draw_points(centers, spec.test_per_class, spec.noise, test_rng)
                                         : Dataset{Mat(0, centers.cols()), {}, spec.classes};
  return {std::move(train), std::move(test)};
}

void AugmentSpec::validate() const {
  if (!(noise_sigma >= 0.0) || !(scale_jitter >= 0.0) || !(dropout_prob >= 0.0 && dropout_prob < 1.0)) {
    fail(ErrorKind::ConfigError, "augmentation needs noise_sigma >= 0, scale_jitter >= 0, dropout_prob in [0, 1)");
  }
}

Mat augment(const Mat& rows, const AugmentSpec& spec, Rng& rng) {
  spec.validate();
  Mat out = rows;
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    if (spec.scale_jitter > 0.0) out.row(r) *= 1.0 + uniform(rng, -1.0, 1.0) * spec.scale_jitter;
    for (Eigen::Index c = 0; c < out.cols(); ++c) {
      if (spec.noise_sigma > 0.0) out(r, c) += spec.noise_sigma * standard_normal(rng);
      if (spec.dropout_prob > 0.0 && uniform01(rng) < spec.dropout_prob) out(r, c) = 0.0;
    }
  }
  return out;
}

ViewBatch make_views(const Dataset& data, std::span<const std::size_t> indices,
                     const ViewSpec& spec, std::uint64_t seed, std::uint64_t epoch,
                     std::uint64_t batch_index) {
  Mat rows(static_cast<Eigen::Index>(indices.size()), data.features.cols());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= data.size()) fail(ErrorKind::IndexOutOfRange, "batch index outside dataset");
    rows.row(static_cast<Eigen::Index>(i)) = data.features.row(static_cast<Eigen::Index>(indices[i]));
  }
  ViewBatch vb;
  vb.sources.assign(indices.begin(), indices.end());
  std::uint64_t view = 0;
  for (std::size_t g = 0; g < spec.globals; ++g, ++view) {
    Rng rng = make_rng(seed, {kViewStream, epoch, batch_index, view});
    vb.global_views.push_back(augment(rows, spec.global, rng));
  }
  for (std::size_t l = 0; l < spec.locals; ++l, ++view) {
    Rng rng = make_rng(seed, {kViewStream, epoch, batch_index, view});
    vb.local_views.push_back(augment(rows, spec.local, rng));
  }
  return vb;
}

Dataset load_csv(const std::string& path, std::optional<int> declared_classes) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::IoError, "cannot open '" + path + "'");
  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  std::string line;
  std::size_t line_no = 0;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view(line);
    if (view.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    const auto cells = split_cells(view);
    if (rows.empty() && line_no == 1) {
      double dummy;
      const bool any_numeric = std::any_of(cells.begin(), cells.end(),
                                           [&](std::string_view c) { return parse_double(c, dummy); });
      if (!any_numeric) continue;
    }
    auto where = [&] { return path + " line " + std::to_string(line_no); };
    if (cells.size() < 2) fail(ErrorKind::ParseError, where() + ": need at least one feature and a label");
    if (width == 0) width = cells.size();
    if (cells.size() != width) {
      fail(ErrorKind::ParseError, where() + ": expected " + std::to_string(width) + " cells, found " +
                                      std::to_string(cells.size()));
    }
    std::vector<double> feats(width - 1);
    for (std::size_t c = 0; c + 1 < width; ++c) {
      if (!parse_double(cells[c], feats[c])) {
        fail(ErrorKind::ParseError, where() + ": cell " + std::to_string(c + 1) + " ('" +
                                        std::string(cells[c]) + "') is not a finite number");
      }
    }
    int label = 0;
    if (!parse_label(cells.back(), label)) {
      fail(ErrorKind::ParseError, where() + ": label '" + std::string(cells.back()) +
                                      "' is not a non-negative integer");
    }
    rows.push_back(std::move(feats));
    labels.push_back(label);
  }
  if (rows.empty()) fail(ErrorKind::EmptyFile, "'" + path + "' has no data rows");
  Dataset d;
  d.features.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(width - 1));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c + 1 < width; ++c) {
      d.features(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
    }
  }
  const int max_label = *std::max_element(labels.begin(), labels.end());
  if (declared_classes) {
    if (max_label >= *declared_classes) {
      fail(ErrorKind::ParseError, "label " + std::to_string(max_label) + " >= declared class count " +
                                      std::to_string(*declared_classes));
    }
    d.num_classes = *declared_classes;
  } else {
    d.num_classes = max_label + 1;
  }
  d.labels = std::move(labels);
  return d;
}

void write_csv(const std::string& path, const Dataset& data) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::IoError, "cannot write '" + path + "'");
  char buf[32];
  for (std::size_t r = 0; r < data.size(); ++r) {
    for (Eigen::Index c = 0; c < data.features.cols(); ++c) {
      const float v = static_cast<float>(data.features(static_cast<Eigen::Index>(r), c));
      auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
      out.write(buf, end - buf);
      out.put(',');
    }
    out << data.labels[r] << '\n';
  }
  if (!out) fail(ErrorKind::IoError, "failed writing '" + path + "'");
}

std::vector<std::vector<std::size_t>> batches(std::size_t n, std::size_t batch_size,
                                              std::uint64_t shuffle_seed, std::uint64_t epoch) {
  if (batch_size < 1) fail(ErrorKind::InvalidShape, "batch size must be >= 1");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng = make_rng(shuffle_seed, {kShuffleStream, epoch});
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t start = 0; start + batch_size <= n; start += batch_size) {
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                     order.begin() + static_cast<std::ptrdiff_t>(start + batch_size));
  }
  return out;
}

}  // namespace massl
