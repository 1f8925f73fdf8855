#include "mmdyn/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "mmdyn/error.hpp"
#include "mmdyn/image_io.hpp"
#include "mmdyn/random.hpp"

namespace mmdyn {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(ModalityKind kind) { return kind == ModalityKind::tabular ? "tabular" : "image"; }

ModalityKind modality_kind_from_string(const std::string& s) {
  if (s == "tabular") return ModalityKind::tabular;
  if (s == "image") return ModalityKind::image;
  throw ConfigError("unknown modality kind '" + s + "'");
}

// ---------------------------------------------------------------------------
// ModalityView / MultimodalDataset

ModalityView ModalityView::tabular(std::string name, int samples, int features, std::vector<double> data,
                                   std::vector<std::string> feature_names) {
  ModalityView v;
  v.name = std::move(name);
  v.kind = ModalityKind::tabular;
  v.samples = samples;
  v.features = features;
  v.data = std::move(data);
  v.feature_names = std::move(feature_names);
  v.validate();
  return v;
}

ModalityView ModalityView::image(std::string name, int samples, int height, int width, int channels,
                                 std::vector<double> data) {
  ModalityView v;
  v.name = std::move(name);
  v.kind = ModalityKind::image;
  v.samples = samples;
  v.height = height;
  v.width = width;
  v.channels = channels;
  v.data = std::move(data);
  v.validate();
  return v;
}

int ModalityView::sample_size() const {
  return kind == ModalityKind::tabular ? features : height * width * channels;
}

void ModalityView::validate() const {
  if (samples < 1) throw DataError("modality '" + name + "': no samples");
  if (kind == ModalityKind::tabular) {
    if (features < 1) throw DataError("modality '" + name + "': no features");
    if (!feature_names.empty() && static_cast<int>(feature_names.size()) != features)
      throw DataError("modality '" + name + "': feature name count does not match column count");
  } else {
    if (height < 1 || width < 1 || channels < 1) throw DataError("modality '" + name + "': empty image shape");
    if (height % 4 != 0 || width % 4 != 0)
      throw DataError("modality '" + name + "': image size " + std::to_string(height) + "x" +
                      std::to_string(width) + " is not divisible by 4");
    for (double v : data)
      if (!(v >= 0.0 && v <= 1.0)) throw DataError("modality '" + name + "': image value outside [0,1]");
  }
  if (data.size() != static_cast<std::size_t>(samples) * sample_size())
    throw DataError("modality '" + name + "': data size does not match shape");
}

const ModalityView& MultimodalDataset::modality(const std::string& name) const {
  return modalities.at(static_cast<std::size_t>(modality_index(name)));
}

int MultimodalDataset::modality_index(const std::string& name) const {
  for (std::size_t i = 0; i < modalities.size(); ++i)
    if (modalities[i].name == name) return static_cast<int>(i);
  throw ConfigError("unknown modality '" + name + "'");
}

void MultimodalDataset::validate() const {
  const int n = sample_count();
  if (n < 1) throw DataError("dataset has no samples");
  if (class_count < 2) throw DataError("dataset needs at least 2 classes");
  if (modalities.empty()) throw DataError("dataset has no modalities");
  if (static_cast<int>(patient_ids.size()) != n) throw DataError("patient id count does not match sample count");
  std::set<std::string> names;
  for (const auto& m : modalities) {
    m.validate();
    if (m.samples != n) throw DataError("modality '" + m.name + "' has " + std::to_string(m.samples) +
                                        " samples, expected " + std::to_string(n));
    if (!names.insert(m.name).second) throw DataError("duplicate modality name '" + m.name + "'");
  }
  std::vector<bool> seen(static_cast<std::size_t>(class_count), false);
  for (int l : labels) {
    if (l < 0 || l >= class_count) throw DataError("label " + std::to_string(l) + " outside [0, C)");
    seen[static_cast<std::size_t>(l)] = true;
  }
  for (int c = 0; c < class_count; ++c)
    if (!seen[static_cast<std::size_t>(c)]) throw DataError("class " + std::to_string(c) + " has no samples");
}

// ---------------------------------------------------------------------------
// Tabular files

namespace {

std::vector<std::string> split_line(const std::string& line, char delim) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, delim)) out.push_back(cell);
  if (!line.empty() && line.back() == delim) out.emplace_back();
  return out;
}

std::string trim(std::string s) {
  auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

bool parse_double(const std::string& text, double& out) {
  const char* begin = text.data();
  const char* end = begin + text.size();
  if (begin != end && *begin == '+') ++begin;
  auto [ptr, ec] = std::from_chars(begin, end, out);
  return ec == std::errc() && ptr == end && begin != end;
}

}  // namespace

ModalityView load_tabular_modality(const fs::path& path, const std::string& name) {
  std::ifstream in(path);
  if (!fs::exists(path) || !in) throw DataError(path.string() + ": no such file");
  std::string header;
  while (std::getline(in, header) && trim(header).empty()) {
  }
  if (trim(header).empty()) throw DataError(path.string() + ": no samples");
  if (!header.empty() && header.back() == '\r') header.pop_back();
  const char delim = header.find('\t') != std::string::npos ? '\t' : (header.find(';') != std::string::npos ? ';' : ',');
  std::vector<std::string> names;
  for (auto& h : split_line(header, delim)) names.push_back(trim(h));
  const int cols = static_cast<int>(names.size());

  std::vector<double> values;
  std::string line;
  int rows = 0;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    auto cells = split_line(line, delim);
    if (static_cast<int>(cells.size()) != cols)
      throw DataError(path.string() + ": ragged row at line " + std::to_string(line_no) + " (" +
                      std::to_string(cells.size()) + " cells, expected " + std::to_string(cols) + ")");
    for (int c = 0; c < cols; ++c) {
      const std::string cell = trim(cells[static_cast<std::size_t>(c)]);
      double v = 0.0;
      const std::string where = " at line " + std::to_string(line_no) + ", column " + std::to_string(c + 1) +
                                " ('" + names[static_cast<std::size_t>(c)] + "')";
      if (!parse_double(cell, v)) throw DataError(path.string() + ": non-numeric cell '" + cell + "'" + where);
      if (!std::isfinite(v)) throw DataError(path.string() + ": non-finite cell '" + cell + "'" + where);
      values.push_back(v);
    }
    ++rows;
  }
  if (rows == 0) throw DataError(path.string() + ": no samples");
  return ModalityView::tabular(name, rows, cols, std::move(values), std::move(names));
}

void write_tabular(const ModalityView& view, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  for (int j = 0; j < view.features; ++j) {
    out << (j ? "," : "");
    out << (view.feature_names.empty() ? "f" + std::to_string(j) : view.feature_names[static_cast<std::size_t>(j)]);
  }
  out << '\n';
  char buf[64];
  for (int i = 0; i < view.samples; ++i) {
    const double* row = view.sample(i);
    for (int j = 0; j < view.features; ++j) {
      auto res = std::to_chars(buf, buf + sizeof buf, row[j]);
      out << (j ? "," : "") << std::string_view(buf, static_cast<std::size_t>(res.ptr - buf));
    }
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// Image files

std::vector<ManifestEntry> read_manifest(const fs::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw DataError(manifest.string() + ": no such file");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DataError(manifest.string() + ": invalid JSON: " + e.what());
  }
  if (!j.is_array()) throw DataError(manifest.string() + ": manifest must be a JSON array");
  std::vector<ManifestEntry> entries;
  for (const auto& e : j) {
    try {
      entries.push_back({e.at("sample").get<int>(), e.at("file").get<std::string>(), e.value("label", 0),
                         e.value("patient", std::string{})});
    } catch (const json::exception& ex) {
      throw DataError(manifest.string() + ": malformed entry: " + ex.what());
    }
  }
  std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) { return a.sample < b.sample; });
  for (std::size_t i = 0; i < entries.size(); ++i)
    if (entries[i].sample != static_cast<int>(i))
      throw DataError(manifest.string() + ": sample indices must be 0..N-1 without gaps");
  return entries;
}

ModalityView load_image_modality(const fs::path& directory, const fs::path& manifest, const std::string& name) {
  const auto entries = read_manifest(manifest);
  if (entries.empty()) throw DataError(manifest.string() + ": no samples");
  std::vector<double> data;
  int h = 0, w = 0, c = 0;
  for (const auto& e : entries) {
    Image8 img = read_image(directory / e.file);
    if (&e == &entries.front()) {
      h = img.height;
      w = img.width;
      c = img.channels;
      if (h % 4 != 0 || w % 4 != 0)
        throw DataError(e.file + ": image size " + std::to_string(h) + "x" + std::to_string(w) +
                        " is not divisible by 4");
      data.reserve(entries.size() * static_cast<std::size_t>(h * w * c));
    } else if (img.height != h || img.width != w || img.channels != c) {
      throw DataError(e.file + ": dimension mismatch (" + std::to_string(img.height) + "x" +
                      std::to_string(img.width) + "x" + std::to_string(img.channels) + ", expected " +
                      std::to_string(h) + "x" + std::to_string(w) + "x" + std::to_string(c) + ")");
    }
    for (auto px : img.pixels) data.push_back(px / 255.0);
  }
  return ModalityView::image(name, static_cast<int>(entries.size()), h, w, c, std::move(data));
}

ModalityView mask_image_modality(const ModalityView& view, double intensity) {
  if (view.kind != ModalityKind::image)
    throw ConfigError("cannot mask tabular modality '" + view.name + "'");
  if (!(intensity >= 0.0 && intensity <= 1.0)) throw ConfigError("mask intensity must lie in [0,1]");
  ModalityView out = view;
  std::fill(out.data.begin(), out.data.end(), intensity);
  return out;
}

// ---------------------------------------------------------------------------
// Splitting and standardization

SplitSpec patient_split(const MultimodalDataset& dataset, const std::set<std::string>& test_patients,
                        double val_fraction, std::uint64_t seed) {
  if (test_patients.empty()) throw ConfigError("test patient set is empty");
  const std::set<std::string> all(dataset.patient_ids.begin(), dataset.patient_ids.end());
  for (const auto& p : test_patients)
    if (!all.count(p)) throw ConfigError("unknown test patient '" + p + "'");
  if (test_patients.size() >= all.size()) throw ConfigError("test patients cover every patient");
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw ConfigError("val_fraction must lie in (0,1)");

  SplitSpec split;
  split.seed = seed;
  std::vector<std::vector<int>> by_class(static_cast<std::size_t>(dataset.class_count));
  int remaining = 0;
  for (int i = 0; i < dataset.sample_count(); ++i) {
    if (test_patients.count(dataset.patient_ids[static_cast<std::size_t>(i)])) {
      split.test_indices.push_back(i);
    } else {
      by_class[static_cast<std::size_t>(dataset.labels[static_cast<std::size_t>(i)])].push_back(i);
      ++remaining;
    }
  }
  if (val_fraction * remaining < 1.0)
    throw ConfigError("val_fraction leaves no validation samples among " + std::to_string(remaining));

  Rng rng = make_rng(seed, "split");
  std::vector<std::vector<int>> val_parts(by_class.size());
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto& idx = by_class[c];
    shuffle(idx.begin(), idx.end(), rng);
    const auto take = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(idx.size())));
    val_parts[c].assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(std::min(take, idx.size())));
    idx.erase(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(val_parts[c].size()));
  }
  std::size_t val_total = 0;
  for (const auto& v : val_parts) val_total += v.size();
  if (val_total == 0) {
    auto largest = std::max_element(by_class.begin(), by_class.end(),
                                     [](const auto& a, const auto& b) { return a.size() < b.size(); });
    auto c = static_cast<std::size_t>(largest - by_class.begin());
    val_parts[c].push_back(largest->front());
    largest->erase(largest->begin());
  }
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    split.train_indices.insert(split.train_indices.end(), by_class[c].begin(), by_class[c].end());
    split.val_indices.insert(split.val_indices.end(), val_parts[c].begin(), val_parts[c].end());
  }
  if (split.train_indices.empty()) throw ConfigError("split leaves an empty training set");
  std::sort(split.train_indices.begin(), split.train_indices.end());
  std::sort(split.val_indices.begin(), split.val_indices.end());
  return split;
}

Standardizer Standardizer::fit(const ModalityView& view, const std::vector<int>& indices) {
  if (indices.empty()) throw ConfigError("cannot standardize on an empty sample set");
  // Tabular: one statistic per column. Image: one per channel, pooled over pixels.
  const auto width = static_cast<std::size_t>(view.sample_size());
  const auto d = static_cast<std::size_t>(view.kind == ModalityKind::tabular ? view.features : view.channels);
  const double count = static_cast<double>(indices.size()) * static_cast<double>(width / d);
  Standardizer s;
  s.mean.assign(d, 0.0);
  s.stddev.assign(d, 0.0);
  for (int i : indices) {
    const double* row = view.sample(i);
    for (std::size_t j = 0; j < width; ++j) s.mean[j % d] += row[j];
  }
  for (double& m : s.mean) m /= count;
  for (int i : indices) {
    const double* row = view.sample(i);
    for (std::size_t j = 0; j < width; ++j) s.stddev[j % d] += (row[j] - s.mean[j % d]) * (row[j] - s.mean[j % d]);
  }
  for (double& v : s.stddev) {
    v = std::sqrt(v / count);
    if (v < 1e-12) v = 1.0;
  }
  return s;
}

void Standardizer::apply(std::span<const double> in, std::span<double> out) const {
  const std::size_t d = mean.size();
  if (d == 0 || in.size() != out.size() || in.size() % d != 0) throw ShapeError("standardizer: width mismatch");
  for (std::size_t j = 0; j < in.size(); ++j) out[j] = (in[j] - mean[j % d]) / stddev[j % d];
}

// ---------------------------------------------------------------------------
// Synthetic generation

void SyntheticSpec::validate() const {
  if (sample_count < 1) throw ConfigError("synthetic: sample_count must be >= 1");
  if (class_count < 2) throw ConfigError("synthetic: class_count must be >= 2");
  if (sample_count < class_count) throw ConfigError("synthetic: fewer samples than classes");
  if (!class_ratios.empty()) {
    if (static_cast<int>(class_ratios.size()) != class_count)
      throw ConfigError("synthetic: class_ratios length must equal class_count");
    for (double r : class_ratios)
      if (!(r > 0.0)) throw ConfigError("synthetic: class ratios must be positive");
  }
  if (patient_count < 2) throw ConfigError("synthetic: patient_count must be >= 2");
  if (patient_count > sample_count) throw ConfigError("synthetic: more patients than samples");
  if (!(noise >= 0.0) || !(image_noise >= 0.0)) throw ConfigError("synthetic: noise must be >= 0");
  if (!(separation > 0.0) || separation < 2.0 * noise)
    throw ConfigError("synthetic: separation must be positive and at least 2*noise");
  if (modalities.empty()) throw ConfigError("synthetic: no modalities");
  std::set<std::string> names;
  for (const auto& m : modalities) {
    if (m.name.empty() || !names.insert(m.name).second)
      throw ConfigError("synthetic: modality names must be unique and nonempty");
    if (!(m.informative_fraction >= 0.0 && m.informative_fraction <= 1.0))
      throw ConfigError("synthetic: informative_fraction must lie in [0,1]");
    for (int c : m.informative_classes)
      if (c < 0 || c >= class_count) throw ConfigError("synthetic: informative class out of range");
    if (m.kind == ModalityKind::tabular) {
      if (m.features < 1) throw ConfigError("synthetic: modality '" + m.name + "' needs features >= 1");
      const int planted = m.planted.empty() ? m.planted_count : static_cast<int>(m.planted.size());
      if (planted < 0 || planted > m.features)
        throw ConfigError("synthetic: modality '" + m.name + "' plants more features than it has");
      std::set<int> uniq(m.planted.begin(), m.planted.end());
      if (uniq.size() != m.planted.size()) throw ConfigError("synthetic: duplicate planted feature index");
      for (int f : m.planted)
        if (f < 0 || f >= m.features) throw ConfigError("synthetic: planted feature index out of range");
    } else {
      if (m.height < 4 || m.width < 4 || m.height % 4 || m.width % 4)
        throw ConfigError("synthetic: image '" + m.name + "' size must be positive multiples of 4");
      if (m.channels < 1) throw ConfigError("synthetic: image channels must be >= 1");
      const auto& p = m.patch;
      if (p.height < 1 || p.width < 1 || p.row < 0 || p.col < 0 || p.row + p.height > m.height ||
          p.col + p.width > m.width)
        throw ConfigError("synthetic: planted patch of '" + m.name + "' lies outside the image");
    }
  }
}

namespace {

double normal(Rng& rng) {
  // Box-Muller on our own uniforms keeps output independent of <random>'s
  // distribution implementation.
  double u1 = uniform01(rng);
  while (u1 <= 0.0) u1 = uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

std::vector<int> class_counts(const SyntheticSpec& spec) {
  const auto c = static_cast<std::size_t>(spec.class_count);
  std::vector<double> ratios = spec.class_ratios.empty() ? std::vector<double>(c, 1.0) : spec.class_ratios;
  const double total = std::accumulate(ratios.begin(), ratios.end(), 0.0);
  std::vector<int> counts(c);
  std::vector<std::pair<double, std::size_t>> frac;
  int assigned = 0;
  for (std::size_t k = 0; k < c; ++k) {
    const double exact = ratios[k] / total * spec.sample_count;
    counts[k] = static_cast<int>(std::floor(exact));
    frac.emplace_back(exact - counts[k], k);
    assigned += counts[k];
  }
  std::stable_sort(frac.begin(), frac.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t i = 0; assigned < spec.sample_count; ++i, ++assigned) ++counts[frac[i % c].second];
  for (std::size_t k = 0; k < c; ++k) {
    if (counts[k] == 0) {
      auto largest = std::max_element(counts.begin(), counts.end());
      --*largest;
      counts[k] = 1;
    }
  }
  return counts;
}

bool eligible(const SyntheticModalitySpec& m, int label) {
  return m.informative_classes.empty() ||
         std::find(m.informative_classes.begin(), m.informative_classes.end(), label) !=
             m.informative_classes.end();
}

}  // namespace

SyntheticResult synthesize_dataset(const SyntheticSpec& spec, std::uint64_t seed) {
  spec.validate();
  const int n = spec.sample_count;
  const int c = spec.class_count;
  SyntheticResult result;
  auto& ds = result.dataset;
  auto& truth = result.truth;
  ds.class_count = c;

  Rng label_rng = make_rng(seed, "synth/labels");
  const auto counts = class_counts(spec);
  for (int k = 0; k < c; ++k) ds.labels.insert(ds.labels.end(), static_cast<std::size_t>(counts[k]), k);
  shuffle(ds.labels.begin(), ds.labels.end(), label_rng);
  for (int i = 0; i < n; ++i) ds.patient_ids.push_back("P" + std::to_string(i % spec.patient_count));

  // Which modalities carry signal for each sample.
  const std::size_t m_count = spec.modalities.size();
  std::vector<std::vector<bool>> informative(static_cast<std::size_t>(n), std::vector<bool>(m_count, false));
  Rng assign_rng = make_rng(seed, "synth/assignment");
  for (int i = 0; i < n; ++i) {
    const int label = ds.labels[static_cast<std::size_t>(i)];
    if (spec.assignment == InformativeAssignment::independent) {
      for (std::size_t m = 0; m < m_count; ++m) {
        const double u = uniform01(assign_rng);
        informative[i][m] = eligible(spec.modalities[m], label) && u < spec.modalities[m].informative_fraction;
      }
    } else {
      double total = 0.0;
      for (const auto& m : spec.modalities)
        if (eligible(m, label)) total += m.informative_fraction;
      double u = uniform01(assign_rng) * total;
      for (std::size_t m = 0; m < m_count && total > 0.0; ++m) {
        if (!eligible(spec.modalities[m], label)) continue;
        u -= spec.modalities[m].informative_fraction;
        if (u < 0.0 || m + 1 == m_count) {
          informative[i][m] = true;
          break;
        }
      }
    }
  }
  truth.informative_modalities.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    for (std::size_t m = 0; m < m_count; ++m)
      if (informative[i][m]) truth.informative_modalities[i].push_back(spec.modalities[m].name);

  for (std::size_t m = 0; m < m_count; ++m) {
    const auto& ms = spec.modalities[m];
    Rng rng = make_rng(seed, "synth/modality/" + ms.name);
    if (ms.kind == ModalityKind::tabular) {
      std::vector<int> planted = ms.planted;
      if (planted.empty() && ms.planted_count > 0) {
        std::vector<int> all(static_cast<std::size_t>(ms.features));
        std::iota(all.begin(), all.end(), 0);
        shuffle(all.begin(), all.end(), rng);
        planted.assign(all.begin(), all.begin() + ms.planted_count);
      }
      std::sort(planted.begin(), planted.end());
      truth.planted_features[ms.name] = planted;
      // planted[j] carries the mean shift for class j mod C.
      std::vector<int> owner(static_cast<std::size_t>(ms.features), -1);
      for (std::size_t j = 0; j < planted.size(); ++j)
        owner[static_cast<std::size_t>(planted[j])] = static_cast<int>(j % static_cast<std::size_t>(c));
      std::vector<double> values(static_cast<std::size_t>(n) * ms.features);
      for (int i = 0; i < n; ++i) {
        const int label = ds.labels[static_cast<std::size_t>(i)];
        for (int f = 0; f < ms.features; ++f) {
          double v = spec.noise * normal(rng);
          if (informative[i][m] && owner[static_cast<std::size_t>(f)] == label) v += spec.separation;
          values[static_cast<std::size_t>(i) * ms.features + f] = v;
        }
      }
      std::vector<std::string> names;
      for (int f = 0; f < ms.features; ++f) names.push_back(ms.name + "_f" + std::to_string(f));
      ds.modalities.push_back(ModalityView::tabular(ms.name, n, ms.features, std::move(values), std::move(names)));
    } else {
      truth.planted_patch[ms.name] = ms.patch;
      const int h = ms.height, w = ms.width, ch = ms.channels;
      std::vector<double> values(static_cast<std::size_t>(n) * h * w * ch);
      for (int i = 0; i < n; ++i) {
        const int label = ds.labels[static_cast<std::size_t>(i)];
        const double level = 0.1 + 0.8 * label / (c - 1);
        for (int y = 0; y < h; ++y)
          for (int x = 0; x < w; ++x)
            for (int k = 0; k < ch; ++k) {
              const double base = informative[i][m] && ms.patch.contains(y, x) ? level : 0.5;
              // Quantized to 8-bit levels so that PNG round trips are exact.
              const double v = to_byte(base + spec.image_noise * normal(rng)) / 255.0;
              values[((static_cast<std::size_t>(i) * h + y) * w + x) * ch + k] = v;
            }
      }
      ds.modalities.push_back(ModalityView::image(ms.name, n, h, w, ch, std::move(values)));
    }
  }
  ds.validate();
  return result;
}

// ---------------------------------------------------------------------------
// JSON

json to_json(const GroundTruth& truth) {
  json j;
  j["planted_features"] = truth.planted_features;
  json patches = json::object();
  for (const auto& [name, p] : truth.planted_patch)
    patches[name] = {{"row", p.row}, {"col", p.col}, {"height", p.height}, {"width", p.width}};
  j["planted_patch"] = patches;
  j["informative_modalities"] = truth.informative_modalities;
  return j;
}

GroundTruth ground_truth_from_json(const json& j) {
  GroundTruth t;
  t.planted_features = j.at("planted_features").get<std::map<std::string, std::vector<int>>>();
  for (const auto& [name, p] : j.at("planted_patch").items())
    t.planted_patch[name] = {p.at("row").get<int>(), p.at("col").get<int>(), p.at("height").get<int>(),
                             p.at("width").get<int>()};
  t.informative_modalities = j.at("informative_modalities").get<std::vector<std::vector<std::string>>>();
  return t;
}

SyntheticSpec synthetic_spec_from_json(const json& j) {
  try {
    SyntheticSpec s;
    s.sample_count = j.at("sample_count").get<int>();
    s.class_count = j.value("class_count", 2);
    s.class_ratios = j.value("class_ratios", std::vector<double>{});
    s.patient_count = j.value("patient_count", 3);
    s.noise = j.value("noise", 1.0);
    s.separation = j.value("separation", 3.0);
    s.image_noise = j.value("image_noise", 0.1);
    const std::string assignment = j.value("assignment", std::string("independent"));
    if (assignment == "independent") {
      s.assignment = InformativeAssignment::independent;
    } else if (assignment == "exclusive") {
      s.assignment = InformativeAssignment::exclusive;
    } else {
      throw ConfigError("synthetic: unknown assignment '" + assignment + "'");
    }
    for (const auto& mj : j.at("modalities")) {
      SyntheticModalitySpec m;
      m.name = mj.at("name").get<std::string>();
      m.kind = modality_kind_from_string(mj.value("kind", std::string("tabular")));
      m.features = mj.value("features", 0);
      m.planted = mj.value("planted", std::vector<int>{});
      m.planted_count = mj.value("planted_count", 0);
      m.height = mj.value("height", 0);
      m.width = mj.value("width", 0);
      m.channels = mj.value("channels", 1);
      if (mj.contains("patch")) {
        const auto& p = mj.at("patch");
        m.patch = {p.at("row").get<int>(), p.at("col").get<int>(), p.at("height").get<int>(),
                   p.at("width").get<int>()};
      }
      m.informative_fraction = mj.value("informative_fraction", 1.0);
      m.informative_classes = mj.value("informative_classes", std::vector<int>{});
      s.modalities.push_back(std::move(m));
    }
    return s;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("synthetic spec: ") + e.what());
  }
}

json to_json(const SyntheticSpec& s) {
  json j;
  j["sample_count"] = s.sample_count;
  j["class_count"] = s.class_count;
  j["class_ratios"] = s.class_ratios;
  j["patient_count"] = s.patient_count;
  j["noise"] = s.noise;
  j["separation"] = s.separation;
  j["image_noise"] = s.image_noise;
  j["assignment"] = s.assignment == InformativeAssignment::independent ? "independent" : "exclusive";
  j["modalities"] = json::array();
  for (const auto& m : s.modalities) {
    json mj{{"name", m.name}, {"kind", to_string(m.kind)}, {"informative_fraction", m.informative_fraction},
            {"informative_classes", m.informative_classes}};
    if (m.kind == ModalityKind::tabular) {
      mj["features"] = m.features;
      mj["planted"] = m.planted;
      mj["planted_count"] = m.planted_count;
    } else {
      mj["height"] = m.height;
      mj["width"] = m.width;
      mj["channels"] = m.channels;
      mj["patch"] = {{"row", m.patch.row}, {"col", m.patch.col}, {"height", m.patch.height},
                     {"width", m.patch.width}};
    }
    j["modalities"].push_back(mj);
  }
  return j;
}

json to_json(const SplitSpec& split) {
  return {{"train_indices", split.train_indices},
          {"val_indices", split.val_indices},
          {"test_indices", split.test_indices},
          {"seed", split.seed}};
}

// ---------------------------------------------------------------------------
// Dataset directories

void write_dataset(const MultimodalDataset& dataset, const fs::path& dir) {
  dataset.validate();
  fs::create_directories(dir);
  json desc;
  desc["class_count"] = dataset.class_count;
  desc["modalities"] = json::array();
  for (const auto& m : dataset.modalities) {
    if (m.kind == ModalityKind::tabular) {
      const std::string file = m.name + ".csv";
      write_tabular(m, dir / file);
      desc["modalities"].push_back({{"name", m.name}, {"kind", "tabular"}, {"file", file}});
    } else {
      const fs::path sub = dir / m.name;
      fs::create_directories(sub);
      json manifest = json::array();
      for (int i = 0; i < m.samples; ++i) {
        Image8 img{m.height, m.width, m.channels, {}};
        const double* px = m.sample(i);
        for (int k = 0; k < m.sample_size(); ++k) img.pixels.push_back(to_byte(px[k]));
        char name[32];
        std::snprintf(name, sizeof name, "%06d.png", i);
        write_image(sub / name, img);
        manifest.push_back({{"sample", i},
                            {"file", name},
                            {"label", dataset.labels[static_cast<std::size_t>(i)]},
                            {"patient", dataset.patient_ids[static_cast<std::size_t>(i)]}});
      }
      std::ofstream(sub / "manifest.json") << manifest.dump(1) << '\n';
      desc["modalities"].push_back(
          {{"name", m.name}, {"kind", "image"}, {"directory", m.name}, {"manifest", m.name + "/manifest.json"}});
    }
  }
  std::ofstream(dir / "dataset.json") << desc.dump(2) << '\n';
  std::ofstream samples(dir / "samples.csv");
  samples << "sample,label,patient\n";
  for (int i = 0; i < dataset.sample_count(); ++i)
    samples << i << ',' << dataset.labels[static_cast<std::size_t>(i)] << ','
            << dataset.patient_ids[static_cast<std::size_t>(i)] << '\n';
}

MultimodalDataset read_dataset(const fs::path& dir) {
  std::ifstream in(dir / "dataset.json");
  if (!in) throw DataError((dir / "dataset.json").string() + ": no such file");
  json desc;
  try {
    in >> desc;
  } catch (const json::exception& e) {
    throw DataError((dir / "dataset.json").string() + ": invalid JSON: " + e.what());
  }
  MultimodalDataset ds;
  ds.class_count = desc.value("class_count", 0);

  std::ifstream samples(dir / "samples.csv");
  if (!samples) throw DataError((dir / "samples.csv").string() + ": no such file");
  std::string line;
  std::getline(samples, line);
  int line_no = 1;
  while (std::getline(samples, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    auto cells = split_line(line, ',');
    if (cells.size() != 3) throw DataError("samples.csv: malformed line " + std::to_string(line_no));
    int label = 0;
    const std::string lab = trim(cells[1]);
    auto [ptr, ec] = std::from_chars(lab.data(), lab.data() + lab.size(), label);
    if (ec != std::errc() || ptr != lab.data() + lab.size())
      throw DataError("samples.csv: non-integer label at line " + std::to_string(line_no));
    ds.labels.push_back(label);
    ds.patient_ids.push_back(trim(cells[2]));
  }
  for (const auto& mj : desc.at("modalities")) {
    const std::string name = mj.at("name").get<std::string>();
    const auto kind = modality_kind_from_string(mj.at("kind").get<std::string>());
    if (kind == ModalityKind::tabular) {
      ds.modalities.push_back(load_tabular_modality(dir / mj.at("file").get<std::string>(), name));
    } else {
      const fs::path manifest = dir / mj.at("manifest").get<std::string>();
      ds.modalities.push_back(load_image_modality(dir / mj.at("directory").get<std::string>(), manifest, name));
      const auto entries = read_manifest(manifest);
      for (std::size_t i = 0; i < entries.size() && i < ds.labels.size(); ++i)
        if (entries[i].label != ds.labels[i] || entries[i].patient != ds.patient_ids[i])
          throw DataError(manifest.string() + ": label/patient of sample " + std::to_string(i) +
                          " disagrees with samples.csv");
    }
  }
  ds.validate();
  return ds;
}

}  // namespace mmdyn
