#include "cpc/dataset.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string_view>

#include "cpc/error.hpp"
#include "cpc/random.hpp"

namespace cpc {

LabeledDataset::LabeledDataset(Matrix features, std::vector<int> labels, int class_count,
                               std::vector<std::int64_t> original_labels,
                               std::vector<Regime> regime_tags)
    : features_(std::move(features)),
      labels_(std::move(labels)),
      class_count_(class_count),
      original_labels_(std::move(original_labels)),
      regime_tags_(std::move(regime_tags)) {
  if (static_cast<std::size_t>(features_.rows()) != labels_.size()) {
    throw Error(ErrorKind::LengthMismatch, "feature rows and labels differ in length");
  }
  if (features_.cols() < 1) throw Error(ErrorKind::DimMismatch, "dimension must be >= 1");
  if (class_count_ < 1) throw Error(ErrorKind::BadSpec, "class count must be >= 1");
  for (int y : labels_) {
    if (y < 0 || y >= class_count_) {
      throw Error(ErrorKind::LabelOutOfRange,
                  "label " + std::to_string(y) + " outside [0, " +
                      std::to_string(class_count_) + ")");
    }
  }
  if (original_labels_.empty()) {
    original_labels_.resize(static_cast<std::size_t>(class_count_));
    std::iota(original_labels_.begin(), original_labels_.end(), std::int64_t{0});
  } else if (original_labels_.size() != static_cast<std::size_t>(class_count_)) {
    throw Error(ErrorKind::LengthMismatch, "label mapping size differs from class count");
  }
  if (!regime_tags_.empty() && regime_tags_.size() != labels_.size()) {
    throw Error(ErrorKind::LengthMismatch, "regime tags differ in length from labels");
  }
}

LabeledDataset LabeledDataset::subset(std::span<const std::size_t> indices) const {
  Matrix x(static_cast<Eigen::Index>(indices.size()), features_.cols());
  std::vector<int> y;
  y.reserve(indices.size());
  std::vector<Regime> tags;
  if (has_regime_tags()) tags.reserve(indices.size());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const std::size_t i = indices[r];
    if (i >= size()) throw Error(ErrorKind::LengthMismatch, "subset index out of range");
    x.row(static_cast<Eigen::Index>(r)) = features_.row(static_cast<Eigen::Index>(i));
    y.push_back(labels_[i]);
    if (has_regime_tags()) tags.push_back(regime_tags_[i]);
  }
  return {std::move(x), std::move(y), class_count_, original_labels_, std::move(tags)};
}

LabeledDataset LabeledDataset::with_features(Matrix features) const {
  return {std::move(features), labels_, class_count_, original_labels_, regime_tags_};
}

std::vector<std::size_t> LabeledDataset::class_counts() const {
  std::vector<std::size_t> counts(static_cast<std::size_t>(class_count_), 0);
  for (int y : labels_) ++counts[static_cast<std::size_t>(y)];
  return counts;
}

LabeledDataset concatenate(std::span<const LabeledDataset> parts) {
  if (parts.empty()) throw Error(ErrorKind::EmptyDataset, "nothing to concatenate");
  const auto& first = parts.front();
  Eigen::Index rows = 0;
  bool tags = true;
  for (const auto& p : parts) {
    if (p.dim() != first.dim() || p.original_labels() != first.original_labels()) {
      throw Error(ErrorKind::DimMismatch, "concatenated datasets disagree on shape or labels");
    }
    rows += static_cast<Eigen::Index>(p.size());
    tags = tags && (p.has_regime_tags() || p.empty());
  }
  Matrix x(rows, static_cast<Eigen::Index>(first.dim()));
  std::vector<int> y;
  std::vector<Regime> regimes;
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    x.middleRows(at, static_cast<Eigen::Index>(p.size())) = p.features();
    at += static_cast<Eigen::Index>(p.size());
    y.insert(y.end(), p.labels().begin(), p.labels().end());
    if (tags) regimes.insert(regimes.end(), p.regime_tags().begin(), p.regime_tags().end());
  }
  return {std::move(x), std::move(y), first.class_count(), first.original_labels(),
          std::move(regimes)};
}

// --- CSV ------------------------------------------------------------------

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

std::vector<std::string_view> split_cells(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    cells.push_back(trim(line.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return cells;
}

bool parse_real(std::string_view s, double& out) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && ptr == s.data() + s.size() && !s.empty();
}

bool parse_int(std::string_view s, std::int64_t& out) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && ptr == s.data() + s.size() && !s.empty();
}

bool blank(std::string_view s) { return trim(s).empty(); }

std::string format_real(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return {buf, ptr};
}

}  // namespace

LabeledDataset read_dataset(std::istream& in, bool has_header) {
  std::string line;
  std::size_t line_no = 0;
  if (has_header) {
    while (std::getline(in, line)) {
      ++line_no;
      if (!blank(line)) break;
    }
  }

  std::vector<double> values;
  std::vector<std::int64_t> raw_labels;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (blank(line)) continue;
    const auto cells = split_cells(line);
    if (width == 0) {
      if (cells.size() < 2) {
        throw Error(ErrorKind::RaggedRow,
                    "line " + std::to_string(line_no) + ": need at least one feature and a label");
      }
      width = cells.size();
    } else if (cells.size() != width) {
      throw Error(ErrorKind::RaggedRow, "line " + std::to_string(line_no) + ": expected " +
                                            std::to_string(width) + " columns, found " +
                                            std::to_string(cells.size()));
    }
    for (std::size_t c = 0; c + 1 < cells.size(); ++c) {
      double v = 0.0;
      if (!parse_real(cells[c], v)) {
        throw Error(ErrorKind::NonNumeric, "line " + std::to_string(line_no) + ", column " +
                                               std::to_string(c + 1) + ": '" +
                                               std::string(cells[c]) + "'");
      }
      values.push_back(v);
    }
    std::int64_t label = 0;
    if (!parse_int(cells.back(), label)) {
      throw Error(ErrorKind::NonNumeric, "line " + std::to_string(line_no) +
                                             ": label is not an integer: '" +
                                             std::string(cells.back()) + "'");
    }
    raw_labels.push_back(label);
  }
  if (raw_labels.empty()) throw Error(ErrorKind::EmptyDataset, "no data rows");

  std::vector<std::int64_t> distinct = raw_labels;
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  std::vector<int> labels;
  labels.reserve(raw_labels.size());
  for (std::int64_t v : raw_labels) {
    labels.push_back(static_cast<int>(std::lower_bound(distinct.begin(), distinct.end(), v) -
                                      distinct.begin()));
  }

  const auto n = static_cast<Eigen::Index>(raw_labels.size());
  const auto d = static_cast<Eigen::Index>(width - 1);
  Matrix x = Eigen::Map<const Matrix>(values.data(), n, d);
  const int classes = static_cast<int>(distinct.size());
  return {std::move(x), std::move(labels), classes, std::move(distinct)};
}

LabeledDataset load_dataset(const std::filesystem::path& path, bool has_header) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  return read_dataset(in, has_header);
}

bool sniff_header(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  std::string line;
  while (std::getline(in, line)) {
    if (blank(line)) continue;
    double v = 0.0;
    return !parse_real(split_cells(line).front(), v);
  }
  return false;
}

void write_dataset(std::ostream& out, const LabeledDataset& ds) {
  for (std::size_t c = 0; c < ds.dim(); ++c) out << 'f' << c << ',';
  out << "label\n";
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (double v : ds.row(i)) out << format_real(v) << ',';
    out << ds.original_labels()[static_cast<std::size_t>(ds.label(i))] << '\n';
  }
}

void save_dataset(const std::filesystem::path& path, const LabeledDataset& ds) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  write_dataset(out, ds);
  if (!out) throw Error(ErrorKind::Io, "write failed for " + path.string());
}

// --- splitting ------------------------------------------------------------

namespace {

std::size_t round_count(double fraction, std::size_t n) {
  return static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
}

// Rounds the class x part table of exact shares n_c * size_p / n to integers so
// that every cell is the floor or ceiling of its share, rows sum to the class
// sizes and columns sum to the part sizes. Cells are rounded up along
// augmenting paths of a unit-capacity bipartite flow, visiting larger
// remainders first; such a rounding always exists for integer margins.
std::vector<std::array<std::size_t, 3>> round_table(const std::vector<std::size_t>& class_sizes,
                                                    const std::array<std::size_t, 3>& part_sizes) {
  const std::size_t classes = class_sizes.size();
  std::size_t n = 0;
  for (auto c : class_sizes) n += c;
  std::vector<std::array<std::size_t, 3>> cell(classes, {0, 0, 0});
  if (n == 0) return cell;
  std::vector<std::array<std::size_t, 3>> rem(classes);
  std::vector<std::size_t> row_need(classes);
  std::array<std::size_t, 3> col_need = part_sizes;
  for (std::size_t c = 0; c < classes; ++c) {
    row_need[c] = class_sizes[c];
    for (std::size_t p = 0; p < 3; ++p) {
      const std::size_t q = class_sizes[c] * part_sizes[p];
      cell[c][p] = q / n;
      rem[c][p] = q % n;
      row_need[c] -= cell[c][p];
      col_need[p] -= cell[c][p];
    }
  }
  // Candidate cells in order of decreasing remainder, then class id.
  std::vector<std::pair<std::size_t, std::size_t>> cand;
  for (std::size_t c = 0; c < classes; ++c)
    for (std::size_t p = 0; p < 3; ++p)
      if (rem[c][p] > 0) cand.emplace_back(c, p);
  std::stable_sort(cand.begin(), cand.end(),
                   [&](const auto& x, const auto& y) { return rem[x.first][x.second] > rem[y.first][y.second]; });
  std::vector<std::array<bool, 3>> up(classes, {false, false, false});

  // Finds a path from class `c` to a part with spare column demand, flipping
  // cells along the way. Alternates unused cells (class -> part) with used
  // cells (part -> class).
  std::vector<bool> seen(classes);
  std::function<bool(std::size_t)> augment = [&](std::size_t c) -> bool {
    seen[c] = true;
    for (const auto& [cc, p] : cand) {
      if (cc != c || up[c][p]) continue;
      if (col_need[p] > 0) {
        up[c][p] = true;
        --col_need[p];
        return true;
      }
      for (std::size_t o = 0; o < classes; ++o) {
        if (seen[o] || !up[o][p]) continue;
        up[c][p] = true;
        up[o][p] = false;
        if (augment(o)) return true;
        up[o][p] = true;
        up[c][p] = false;
      }
    }
    return false;
  };
  for (std::size_t c = 0; c < classes; ++c) {
    while (row_need[c] > 0) {
      std::fill(seen.begin(), seen.end(), false);
      if (!augment(c)) throw std::logic_error("stratified rounding failed");
      --row_need[c];
    }
  }
  for (std::size_t c = 0; c < classes; ++c)
    for (std::size_t p = 0; p < 3; ++p)
      if (up[c][p]) ++cell[c][p];
  return cell;
}

}  // namespace

SplitIndices split_indices(const LabeledDataset& ds, const SplitSpec& spec) {
  if (spec.train < 0 || spec.validation < 0 || spec.test < 0 ||
      std::abs(spec.train + spec.validation + spec.test - 1.0) > 1e-9) {
    throw Error(ErrorKind::BadFractions, "split fractions must be non-negative and sum to 1");
  }
  const std::size_t n = ds.size();
  const std::size_t n_val = round_count(spec.validation, n);
  const std::size_t n_test = std::min(round_count(spec.test, n), n - std::min(n, n_val));

  Rng rng(spec.seed);
  SplitIndices out;
  if (!spec.stratified) {
    IndexList order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    out.validation.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
    out.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_val),
                    order.begin() + static_cast<std::ptrdiff_t>(n_val + n_test));
    out.train.assign(order.begin() + static_cast<std::ptrdiff_t>(n_val + n_test), order.end());
  } else {
    const auto sizes = ds.class_counts();
    const auto table = round_table(sizes, {n - n_val - n_test, n_val, n_test});
    std::vector<IndexList> by_class(sizes.size());
    for (std::size_t i = 0; i < n; ++i) by_class[static_cast<std::size_t>(ds.label(i))].push_back(i);
    for (std::size_t c = 0; c < by_class.size(); ++c) {
      auto& members = by_class[c];
      std::shuffle(members.begin(), members.end(), rng);
      const auto v_end = members.begin() + static_cast<std::ptrdiff_t>(table[c][1]);
      const auto t_end = v_end + static_cast<std::ptrdiff_t>(table[c][2]);
      out.validation.insert(out.validation.end(), members.begin(), v_end);
      out.test.insert(out.test.end(), v_end, t_end);
      out.train.insert(out.train.end(), t_end, members.end());
    }
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.validation.begin(), out.validation.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

SplitResult split(const LabeledDataset& ds, const SplitSpec& spec) {
  const auto idx = split_indices(ds, spec);
  return {ds.subset(idx.train), ds.subset(idx.validation), ds.subset(idx.test)};
}

IndexList FoldAssignment::members(int k) const {
  IndexList out;
  for (std::size_t i = 0; i < fold_of.size(); ++i) {
    if (fold_of[i] == k) out.push_back(i);
  }
  return out;
}

IndexList FoldAssignment::complement(int k) const {
  IndexList out;
  for (std::size_t i = 0; i < fold_of.size(); ++i) {
    if (fold_of[i] != k) out.push_back(i);
  }
  return out;
}

FoldAssignment kfold(const LabeledDataset& ds, int folds, std::uint64_t seed, bool stratified) {
  const std::size_t n = ds.size();
  if (folds < 2 || static_cast<std::size_t>(folds) > n) {
    throw Error(ErrorKind::BadK, "fold count " + std::to_string(folds) + " not in [2, " +
                                     std::to_string(n) + "]");
  }
  Rng rng(seed);
  IndexList order;
  order.reserve(n);
  if (stratified) {
    std::vector<IndexList> by_class(static_cast<std::size_t>(ds.class_count()));
    for (std::size_t i = 0; i < n; ++i) by_class[static_cast<std::size_t>(ds.label(i))].push_back(i);
    for (auto& members : by_class) {
      std::shuffle(members.begin(), members.end(), rng);
      order.insert(order.end(), members.begin(), members.end());
    }
  } else {
    order.resize(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
  }

  // Round-robin over the class-grouped order keeps both global and
  // per-class fold sizes within one of each other.
  std::vector<int> relabel(static_cast<std::size_t>(folds));
  std::iota(relabel.begin(), relabel.end(), 0);
  std::shuffle(relabel.begin(), relabel.end(), rng);

  FoldAssignment out;
  out.folds = folds;
  out.seed = seed;
  out.fold_of.assign(n, 0);
  for (std::size_t p = 0; p < n; ++p) {
    out.fold_of[order[p]] = relabel[p % static_cast<std::size_t>(folds)];
  }
  return out;
}

// --- synthetic fixture ----------------------------------------------------

namespace {

void validate(const TwoRegimeSpec& spec) {
  if (spec.classes < 2 || spec.dim < 2 || spec.n_easy < 0 || spec.n_hard < 0 ||
      spec.n_easy + spec.n_hard < 1 || !(spec.easy_margin > 0) || !(spec.hard_margin > 0) ||
      !(spec.easy_margin > spec.hard_margin)) {
    throw Error(ErrorKind::BadSpec,
                "two-regime fixture needs classes >= 2, dim >= 2, samples >= 1 and "
                "easy_margin > hard_margin > 0");
  }
}

Matrix slot_centers(int classes, int dim, double margin) {
  Matrix slots = Matrix::Zero(classes, dim);
  if (classes <= dim) {
    const double scale = margin / std::numbers::sqrt2;
    for (int c = 0; c < classes; ++c) slots(c, c) = scale;
  } else {
    const double radius = margin / (2.0 * std::sin(std::numbers::pi / classes));
    for (int c = 0; c < classes; ++c) {
      const double angle = 2.0 * std::numbers::pi * c / classes;
      slots(c, 0) = radius * std::cos(angle);
      slots(c, 1) = radius * std::sin(angle);
    }
  }
  return slots;
}

}  // namespace

Matrix two_regime_centers(const TwoRegimeSpec& spec, Regime regime) {
  validate(spec);
  if (regime == Regime::easy) return slot_centers(spec.classes, spec.dim, spec.easy_margin);

  const Matrix slots = slot_centers(spec.classes, spec.dim, spec.hard_margin);
  const double shift = -2.0 * spec.easy_margin / std::sqrt(static_cast<double>(spec.dim));
  Matrix centers(spec.classes, spec.dim);
  for (int c = 0; c < spec.classes; ++c) {
    centers.row(c) = slots.row((c + 1) % spec.classes).array() + shift;
  }
  return centers;
}

LabeledDataset generate_two_regime(const TwoRegimeSpec& spec) {
  validate(spec);
  const Matrix easy = two_regime_centers(spec, Regime::easy);
  const Matrix hard = two_regime_centers(spec, Regime::hard);
  const int n = spec.n_easy + spec.n_hard;

  Rng rng(spec.seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  Matrix x(n, spec.dim);
  std::vector<int> y(static_cast<std::size_t>(n));
  std::vector<Regime> tags(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const bool is_easy = i < spec.n_easy;
    const int local = is_easy ? i : i - spec.n_easy;
    const int c = local % spec.classes;
    const Matrix& centers = is_easy ? easy : hard;
    for (int j = 0; j < spec.dim; ++j) x(i, j) = centers(c, j) + noise(rng);
    y[static_cast<std::size_t>(i)] = c;
    tags[static_cast<std::size_t>(i)] = is_easy ? Regime::easy : Regime::hard;
  }

  IndexList order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  LabeledDataset ds(std::move(x), std::move(y), spec.classes, {}, std::move(tags));
  return ds.subset(order);
}

}  // namespace cpc
