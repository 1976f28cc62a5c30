#include "lccn/dataset.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "binary_io.hpp"

namespace lccn {

namespace {

constexpr char kMagic[4] = {'L', 'C', 'D', 'S'};
constexpr std::uint16_t kVersion = 1;
constexpr std::uint32_t kFlagTrueLabels = 1u << 0;
constexpr std::uint32_t kFlagCleanFlags = 1u << 1;

std::size_t parse_index(const std::string& token) {
  std::size_t used = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(token, &used);
  } catch (const std::exception&) {
    throw std::invalid_argument("expected a class index, got '" + token + "'");
  }
  if (used != token.size()) throw std::invalid_argument("expected a class index, got '" + token + "'");
  return static_cast<std::size_t>(v);
}

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> parts;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, sep)) {
    if (!part.empty()) parts.push_back(part);
  }
  return parts;
}

void check_rate(double rate) {
  if (!(rate >= 0.0 && rate <= 1.0)) throw std::invalid_argument("noise rate must lie in [0, 1]");
}

// Class whose label noise applies: the true class when known.
std::size_t source_class(const Dataset& data, std::size_t n) {
  return data.has_true_labels() ? data.true_labels[n] : data.noisy_labels[n];
}

}  // namespace

NoiseKind parse_noise_kind(const std::string& name) {
  if (name == "none") return NoiseKind::none;
  if (name == "pairwise") return NoiseKind::pairwise;
  if (name == "circular") return NoiseKind::circular;
  if (name == "symmetric") return NoiseKind::symmetric;
  throw std::invalid_argument("unknown noise kind '" + name + "'");
}

std::string to_string(NoiseKind kind) {
  switch (kind) {
    case NoiseKind::none: return "none";
    case NoiseKind::pairwise: return "pairwise";
    case NoiseKind::circular: return "circular";
    case NoiseKind::symmetric: return "symmetric";
  }
  return "none";
}

std::map<std::size_t, std::size_t> parse_flip_map(const std::string& text) {
  std::map<std::size_t, std::size_t> flip_map;
  for (const auto& pair : split(text, ',')) {
    const auto colon = pair.find(':');
    if (colon == std::string::npos) throw std::invalid_argument("flip map entry needs 'from:to'");
    const auto from = parse_index(pair.substr(0, colon));
    if (flip_map.count(from)) throw std::invalid_argument("flip map source repeated");
    flip_map[from] = parse_index(pair.substr(colon + 1));
  }
  return flip_map;
}

std::string format_flip_map(const std::map<std::size_t, std::size_t>& flip_map) {
  std::string out;
  for (const auto& [from, to] : flip_map) {
    if (!out.empty()) out += ',';
    out += std::to_string(from) + ':' + std::to_string(to);
  }
  return out;
}

std::vector<std::vector<std::size_t>> parse_groups(const std::string& text) {
  std::vector<std::vector<std::size_t>> groups;
  for (const auto& group : split(text, ';')) {
    std::vector<std::size_t> members;
    for (const auto& token : split(group, ',')) members.push_back(parse_index(token));
    groups.push_back(std::move(members));
  }
  return groups;
}

std::string format_groups(const std::vector<std::vector<std::size_t>>& groups) {
  std::string out;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    if (g) out += ';';
    for (std::size_t i = 0; i < groups[g].size(); ++i) {
      if (i) out += ',';
      out += std::to_string(groups[g][i]);
    }
  }
  return out;
}

bool Dataset::has_outliers() const {
  if (!has_true_labels()) return false;
  return std::any_of(true_labels.begin(), true_labels.end(),
                     [this](std::uint16_t t) { return t == num_classes; });
}

std::size_t Dataset::num_clean_flagged() const {
  return static_cast<std::size_t>(std::count(clean_flags.begin(), clean_flags.end(), 1));
}

void Dataset::validate() const {
  if (num_classes < 2) throw std::invalid_argument("dataset needs at least 2 classes");
  if (features.size() != num_samples * num_features) {
    throw std::invalid_argument("feature matrix size mismatch");
  }
  if (noisy_labels.size() != num_samples) throw std::invalid_argument("noisy label count mismatch");
  for (auto y : noisy_labels) {
    if (y >= num_classes) throw std::invalid_argument("noisy label out of range");
  }
  if (has_true_labels()) {
    if (true_labels.size() != num_samples) throw std::invalid_argument("true label count mismatch");
    for (auto t : true_labels) {
      if (t > num_classes) throw std::invalid_argument("true label out of range");
    }
  }
  if (has_clean_flags()) {
    if (clean_flags.size() != num_samples) throw std::invalid_argument("clean flag count mismatch");
    if (!has_true_labels() && num_clean_flagged() > 0) {
      throw std::invalid_argument("clean flags require true labels");
    }
    for (auto f : clean_flags) {
      if (f > 1) throw std::invalid_argument("clean flag must be 0 or 1");
    }
  }
}

bool Dataset::same_data(const Dataset& other) const {
  return num_samples == other.num_samples && num_features == other.num_features &&
         num_classes == other.num_classes && features == other.features &&
         noisy_labels == other.noisy_labels && true_labels == other.true_labels &&
         clean_flags == other.clean_flags;
}

Matrix gather_features(const Dataset& data, std::span<const std::size_t> indices) {
  Matrix x(indices.size(), data.num_features);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const auto src = data.row(indices[i]);
    auto dst = x.row(i);
    for (std::size_t j = 0; j < src.size(); ++j) dst[j] = src[j];
  }
  return x;
}

Matrix all_features(const Dataset& data) {
  std::vector<std::size_t> indices(data.num_samples);
  std::iota(indices.begin(), indices.end(), std::size_t{0});
  return gather_features(data, indices);
}

Dataset with_true_labels(const Dataset& data) {
  if (!data.has_true_labels()) throw std::invalid_argument("dataset has no ground truth");
  Dataset out;
  out.num_features = data.num_features;
  out.num_classes = data.num_classes;
  out.meta = data.meta;
  for (std::size_t n = 0; n < data.num_samples; ++n) {
    if (data.is_outlier(n)) continue;
    const auto r = data.row(n);
    out.features.insert(out.features.end(), r.begin(), r.end());
    out.noisy_labels.push_back(data.true_labels[n]);
    out.true_labels.push_back(data.true_labels[n]);
    ++out.num_samples;
  }
  return out;
}

Dataset gen_gaussian_mixture(std::size_t num_classes, std::size_t num_features,
                             std::size_t n_per_class, double separation, Rng& rng) {
  if (num_classes < 2) throw std::invalid_argument("mixture needs at least 2 classes");
  if (num_features < 2) throw std::invalid_argument("mixture needs at least 2 features");
  if (!(separation >= 0.0)) throw std::invalid_argument("separation must be non-negative");
  if (num_classes > 65535) throw std::invalid_argument("too many classes for u16 labels");
  const std::size_t d = std::max(num_features, num_classes);
  const double offset = separation / std::sqrt(2.0);

  Dataset data;
  data.num_classes = num_classes;
  data.num_features = d;
  data.num_samples = num_classes * n_per_class;
  std::vector<std::uint16_t> labels(data.num_samples);
  for (std::size_t n = 0; n < data.num_samples; ++n) {
    labels[n] = static_cast<std::uint16_t>(n % num_classes);
  }
  rng.shuffle(std::span<std::uint16_t>(labels));

  data.features.resize(data.num_samples * d);
  for (std::size_t n = 0; n < data.num_samples; ++n) {
    for (std::size_t j = 0; j < d; ++j) {
      const double mean = (j == labels[n]) ? offset : 0.0;
      data.features[n * d + j] = static_cast<float>(mean + rng.normal());
    }
  }
  data.noisy_labels = labels;
  data.true_labels = labels;
  char buf[128];
  std::snprintf(buf, sizeof(buf), "gaussian_mixture(k=%zu,d=%zu,n_per_class=%zu,sep=%.17g)",
                num_classes, d, n_per_class, separation);
  data.meta.generator = buf;
  data.meta.noise = "none";
  return data;
}

Dataset inject_pairwise(Dataset data, const std::map<std::size_t, std::size_t>& flip_map,
                        double rate, Rng& rng) {
  check_rate(rate);
  std::set<std::size_t> targets;
  for (const auto& [from, to] : flip_map) {
    if (from == to) throw std::invalid_argument("flip map sends a class to itself");
    if (from >= data.num_classes || to >= data.num_classes) {
      throw std::invalid_argument("flip map class out of range");
    }
    if (!targets.insert(to).second) throw std::invalid_argument("flip map is not injective");
  }
  for (std::size_t n = 0; n < data.num_samples; ++n) {
    if (data.is_outlier(n)) continue;
    const auto it = flip_map.find(source_class(data, n));
    if (it == flip_map.end()) continue;
    if (rng.uniform() < rate) data.noisy_labels[n] = static_cast<std::uint16_t>(it->second);
  }
  data.meta.noise = "pairwise(r=" + std::to_string(rate) + ",map=" + format_flip_map(flip_map) + ")";
  return data;
}

Dataset inject_circular(Dataset data, const std::vector<std::vector<std::size_t>>& groups,
                        double rate, Rng& rng) {
  check_rate(rate);
  std::vector<std::size_t> successor(data.num_classes, data.num_classes);
  for (const auto& group : groups) {
    if (group.size() < 2) throw std::invalid_argument("circular group needs at least 2 classes");
    for (std::size_t i = 0; i < group.size(); ++i) {
      const auto c = group[i];
      if (c >= data.num_classes) throw std::invalid_argument("group class out of range");
      if (successor[c] != data.num_classes) throw std::invalid_argument("class in two groups");
      successor[c] = group[(i + 1) % group.size()];
    }
  }
  for (std::size_t c = 0; c < data.num_classes; ++c) {
    if (successor[c] == data.num_classes) {
      throw std::invalid_argument("circular groups must cover every class");
    }
  }
  for (std::size_t n = 0; n < data.num_samples; ++n) {
    if (data.is_outlier(n)) continue;
    if (rng.uniform() < rate) {
      data.noisy_labels[n] = static_cast<std::uint16_t>(successor[source_class(data, n)]);
    }
  }
  data.meta.noise = "circular(r=" + std::to_string(rate) + ",groups=" + format_groups(groups) + ")";
  return data;
}

Dataset inject_symmetric(Dataset data, double rate, Rng& rng) {
  check_rate(rate);
  const auto k = data.num_classes;
  for (std::size_t n = 0; n < data.num_samples; ++n) {
    if (data.is_outlier(n)) continue;
    if (rng.uniform() < rate) {
      const auto c = source_class(data, n);
      auto other = static_cast<std::size_t>(rng.below(k - 1));
      if (other >= c) ++other;
      data.noisy_labels[n] = static_cast<std::uint16_t>(other);
    }
  }
  data.meta.noise = "symmetric(r=" + std::to_string(rate) + ")";
  return data;
}

Dataset inject_noise(Dataset data, const NoiseSpec& spec, Rng& rng) {
  switch (spec.kind) {
    case NoiseKind::none: return data;
    case NoiseKind::pairwise: return inject_pairwise(std::move(data), spec.flip_map, spec.rate, rng);
    case NoiseKind::circular: return inject_circular(std::move(data), spec.groups, spec.rate, rng);
    case NoiseKind::symmetric: return inject_symmetric(std::move(data), spec.rate, rng);
  }
  return data;
}

OutlierLabelPolicy parse_outlier_policy(const std::string& name) {
  if (name == "uniform") return OutlierLabelPolicy::uniform;
  if (name == "class-proportional" || name == "class_proportional") {
    return OutlierLabelPolicy::class_proportional;
  }
  throw std::invalid_argument("unknown outlier label policy '" + name + "'");
}

std::string to_string(OutlierLabelPolicy policy) {
  return policy == OutlierLabelPolicy::uniform ? "uniform" : "class-proportional";
}

Dataset inject_outliers(Dataset data, std::size_t n_outliers, OutlierLabelPolicy policy, Rng& rng) {
  if (n_outliers == 0) return data;
  std::vector<std::size_t> pool;
  for (std::size_t n = 0; n < data.num_samples; ++n) {
    if (!data.is_outlier(n)) pool.push_back(n);
  }
  if (pool.empty()) throw std::invalid_argument("no in-distribution samples to build outliers from");
  if (n_outliers > data.num_samples) throw std::invalid_argument("more outliers than samples");
  if (!data.has_true_labels()) data.true_labels = data.noisy_labels;

  const std::vector<std::uint16_t> label_pool = data.noisy_labels;
  const std::size_t d = data.num_features;
  std::vector<float> shuffled(d);
  for (std::size_t i = 0; i < n_outliers; ++i) {
    const auto src = pool[rng.below(pool.size())];
    const auto r = data.row(src);
    std::copy(r.begin(), r.end(), shuffled.begin());
    rng.shuffle(std::span<float>(shuffled));
    data.features.insert(data.features.end(), shuffled.begin(), shuffled.end());

    std::uint16_t label = 0;
    if (policy == OutlierLabelPolicy::uniform) {
      label = static_cast<std::uint16_t>(rng.below(data.num_classes));
    } else {
      label = label_pool[pool[rng.below(pool.size())]];
    }
    data.noisy_labels.push_back(label);
    data.true_labels.push_back(static_cast<std::uint16_t>(data.num_classes));
    if (data.has_clean_flags()) data.clean_flags.push_back(0);
    ++data.num_samples;
  }
  data.meta.noise += "+outliers(" + std::to_string(n_outliers) + "," + to_string(policy) + ")";
  return data;
}

Dataset flag_clean(Dataset data, std::size_t n_clean, std::size_t n_clean_outliers) {
  if ((n_clean > 0 || n_clean_outliers > 0) && !data.has_true_labels()) {
    throw std::invalid_argument("clean flags require ground truth");
  }
  data.clean_flags.assign(data.num_samples, 0);
  std::size_t inliers = 0;
  std::size_t outliers = 0;
  for (std::size_t n = 0; n < data.num_samples; ++n) {
    if (data.is_outlier(n)) {
      if (outliers < n_clean_outliers) {
        data.clean_flags[n] = 1;
        ++outliers;
      }
    } else if (inliers < n_clean) {
      data.clean_flags[n] = 1;
      ++inliers;
    }
  }
  if (inliers < n_clean || outliers < n_clean_outliers) {
    throw std::invalid_argument("not enough samples to flag as clean");
  }
  return data;
}

TransitionMatrix true_transition(const Dataset& data) {
  if (!data.has_true_labels()) throw std::invalid_argument("dataset has no ground truth");
  const std::size_t k = data.num_classes;
  const std::size_t rows = data.has_outliers() ? k + 1 : k;
  std::vector<double> counts(rows * k, 0.0);
  for (std::size_t n = 0; n < data.num_samples; ++n) {
    counts[data.true_labels[n] * k + data.noisy_labels[n]] += 1.0;
  }
  TransitionMatrix phi(rows, k);
  for (std::size_t i = 0; i < rows; ++i) {
    double total = 0.0;
    for (std::size_t j = 0; j < k; ++j) total += counts[i * k + j];
    for (std::size_t j = 0; j < k; ++j) {
      phi(i, j) = total > 0.0 ? counts[i * k + j] / total : 1.0 / static_cast<double>(k);
    }
  }
  return phi;
}

std::vector<std::uint8_t> encode_dataset(const Dataset& data) {
  data.validate();
  detail::ByteWriter w;
  w.put_raw(kMagic, 4);
  w.put(kVersion);
  w.put(static_cast<std::uint64_t>(data.num_samples));
  w.put(static_cast<std::uint32_t>(data.num_features));
  w.put(static_cast<std::uint32_t>(data.num_classes));
  std::uint32_t flags = 0;
  if (data.has_true_labels()) flags |= kFlagTrueLabels;
  if (data.has_clean_flags()) flags |= kFlagCleanFlags;
  w.put(flags);
  for (float f : data.features) w.put_f32(f);
  for (auto y : data.noisy_labels) w.put(y);
  if (data.has_true_labels()) {
    for (auto t : data.true_labels) w.put(t);
  }
  if (data.has_clean_flags()) {
    for (auto c : data.clean_flags) w.put(c);
  }
  auto& bytes = w.bytes();
  const auto crc = static_cast<std::uint32_t>(
      crc32(0L, bytes.data(), static_cast<uInt>(bytes.size())));
  w.put(crc);
  return std::move(w.bytes());
}

Dataset decode_dataset(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 + 2 + 8 + 4 + 4 + 4 + 4) throw std::runtime_error("dataset file truncated");
  detail::ByteReader r(bytes.data(), bytes.size());
  char magic[4];
  r.get_raw(magic, 4);
  if (!std::equal(magic, magic + 4, kMagic)) throw std::runtime_error("not a dataset file (bad magic)");
  const auto version = r.get<std::uint16_t>();
  if (version != kVersion) throw std::runtime_error("unsupported dataset version");

  const auto payload = bytes.size() - 4;
  detail::ByteReader tail(bytes.data() + payload, 4);
  const auto stored_crc = tail.get<std::uint32_t>();

  Dataset data;
  data.num_samples = static_cast<std::size_t>(r.get<std::uint64_t>());
  data.num_features = r.get<std::uint32_t>();
  data.num_classes = r.get<std::uint32_t>();
  const auto flags = r.get<std::uint32_t>();
  if (flags & ~(kFlagTrueLabels | kFlagCleanFlags)) throw std::runtime_error("unknown dataset flags");

  std::size_t expected = r.position() + data.num_samples * data.num_features * 4 +
                         data.num_samples * 2 + 4;
  if (flags & kFlagTrueLabels) expected += data.num_samples * 2;
  if (flags & kFlagCleanFlags) expected += data.num_samples;
  if (bytes.size() != expected) throw std::runtime_error("dataset file size does not match header");

  const auto crc = static_cast<std::uint32_t>(crc32(0L, bytes.data(), static_cast<uInt>(payload)));
  if (crc != stored_crc) throw std::runtime_error("dataset checksum mismatch");

  data.features.resize(data.num_samples * data.num_features);
  for (auto& f : data.features) f = r.get_f32();
  data.noisy_labels.resize(data.num_samples);
  for (auto& y : data.noisy_labels) y = r.get<std::uint16_t>();
  if (flags & kFlagTrueLabels) {
    data.true_labels.resize(data.num_samples);
    for (auto& t : data.true_labels) t = r.get<std::uint16_t>();
  }
  if (flags & kFlagCleanFlags) {
    data.clean_flags.resize(data.num_samples);
    for (auto& c : data.clean_flags) c = r.get<std::uint8_t>();
  }
  try {
    data.validate();
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(std::string("malformed dataset: ") + e.what());
  }
  return data;
}

void write_dataset(const Dataset& data, const std::string& path) {
  detail::write_file(path, encode_dataset(data));
}

Dataset read_dataset(const std::string& path) {
  const auto bytes = detail::read_file(path);
  return decode_dataset(bytes);
}

void write_dataset_csv(std::ostream& out, const Dataset& data) {
  for (std::size_t j = 0; j < data.num_features; ++j) out << 'x' << j << ',';
  out << "noisy_label,true_label,clean_flag\n";
  char buf[32];
  for (std::size_t n = 0; n < data.num_samples; ++n) {
    for (float f : data.row(n)) {
      std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(f));
      out << buf << ',';
    }
    out << data.noisy_labels[n] << ',';
    if (data.has_true_labels()) out << data.true_labels[n];
    out << ',';
    if (data.has_clean_flags()) out << static_cast<int>(data.clean_flags[n]);
    out << '\n';
  }
}

std::map<std::size_t, std::size_t> default_flip_map(std::size_t num_classes) {
  std::map<std::size_t, std::size_t> m;
  for (std::size_t c = 0; c + 1 < num_classes; c += 2) m[c] = c + 1;
  return m;
}

Scenario make_scenario(const ScenarioSpec& spec, std::uint64_t seed) {
  auto gen = Rng::derive(seed, Stream::datagen);
  auto noise = Rng::derive(seed, Stream::noise);
  auto outliers = Rng::derive(seed, Stream::outliers);
  auto test_rng = Rng::derive(seed, Stream::test_data);
  NoiseSpec noise_spec = spec.noise;
  if (noise_spec.kind == NoiseKind::pairwise && noise_spec.flip_map.empty()) {
    noise_spec.flip_map = default_flip_map(spec.num_classes);
  }
  if (noise_spec.kind == NoiseKind::circular && noise_spec.groups.empty()) {
    std::vector<std::size_t> all(spec.num_classes);
    for (std::size_t c = 0; c < all.size(); ++c) all[c] = c;
    noise_spec.groups.push_back(std::move(all));
  }
  Scenario s;
  s.train = gen_gaussian_mixture(spec.num_classes, spec.num_features, spec.n_per_class,
                                 spec.separation, gen);
  s.train = inject_noise(std::move(s.train), noise_spec, noise);
  if (spec.outliers > 0) {
    s.train = inject_outliers(std::move(s.train), spec.outliers, spec.outlier_policy, outliers);
  }
  if (spec.clean > 0 || spec.clean_outliers > 0) {
    s.train = flag_clean(std::move(s.train), spec.clean, spec.clean_outliers);
  }
  s.test = gen_gaussian_mixture(spec.num_classes, spec.num_features, spec.test_per_class,
                                spec.separation, test_rng);
  s.train.meta.seed = s.test.meta.seed = seed;
  return s;
}

}  // namespace lccn
