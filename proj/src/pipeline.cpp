#include "mmdyn/pipeline.hpp"

#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include "mmdyn/error.hpp"
#include "mmdyn/image_io.hpp"

namespace mmdyn {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Shortest text that round-trips to the same double.
std::string shortest(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

}  // namespace

PreparedData prepare_data(const TrainConfig& config) {
  PreparedData out;
  if (!config.dataset.empty()) {
    out.dataset = read_dataset(config.dataset);
    const fs::path truth = fs::path(config.dataset) / "ground_truth.json";
    if (fs::exists(truth)) {
      std::ifstream in(truth);
      out.truth = ground_truth_from_json(json::parse(in));
    }
  } else if (!config.synthetic.is_null()) {
    SyntheticResult r = synthesize_dataset(synthetic_spec_from_json(config.synthetic), config.data_seed);
    out.dataset = std::move(r.dataset);
    out.truth = std::move(r.truth);
  } else {
    throw ConfigError("config names no data: set 'dataset' or 'synthetic'");
  }
  out.dataset.validate();

  std::set<std::string> test(config.test_patients.begin(), config.test_patients.end());
  if (test.empty()) {
    const std::set<std::string> all(out.dataset.patient_ids.begin(), out.dataset.patient_ids.end());
    test.insert(*all.rbegin());
  }
  out.split = patient_split(out.dataset, test, config.val_fraction, config.split_seed);
  return out;
}

void write_synthetic(const SyntheticResult& result, const fs::path& dir) {
  write_dataset(result.dataset, dir);
  write_json(dir / "ground_truth.json", to_json(result.truth));
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  out << text;
  if (!out) throw Error("cannot write '" + path.string() + "'");
}

void write_json(const fs::path& path, const json& doc) { write_text(path, doc.dump(2) + "\n"); }

void write_curve(const fs::path& path, const TcpErrorCurve& curve) {
  std::ostringstream os;
  os << "threshold,fraction\n";
  for (std::size_t i = 0; i < curve.thresholds.size(); ++i)
    os << shortest(curve.thresholds[i]) << ',' << shortest(curve.fractions[i]) << '\n';
  write_text(path, os.str());
}

void write_jsonl(const fs::path& path, const std::vector<json>& records) {
  std::string text;
  for (const auto& r : records) text += r.dump() + "\n";
  write_text(path, text);
}

void write_ranking(const fs::path& path, const std::vector<RankedFeature>& ranking) {
  std::ostringstream os;
  os << "rank,feature_name,mean_gate\n";
  for (std::size_t i = 0; i < ranking.size(); ++i) {
    const auto& r = ranking[i];
    os << i + 1 << ',' << (r.name.empty() ? "f" + std::to_string(r.index) : r.name) << ',' << shortest(r.mean_gate) << '\n';
  }
  write_text(path, os.str());
}

void write_heatmap(const fs::path& path, const InformativenessMap& map) {
  Image8 img{map.height, map.width, 1, {}};
  img.pixels.reserve(map.values.size());
  for (double v : map.values) img.pixels.push_back(to_byte(v));
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_image(path, img);
}

std::vector<double> default_curve_thresholds() {
  std::vector<double> t;
  for (int i = 0; i <= 20; ++i) t.push_back(i / 10.0);
  return t;
}

}  // namespace mmdyn
