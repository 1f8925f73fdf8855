#include "mmdyn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "mmdyn/error.hpp"

namespace mmdyn {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "checkpoint format assumes a little-endian host");

namespace {

constexpr const char* kFormat = "mmdyn-checkpoint";
constexpr int kVersion = 1;

LossBreakdown losses_from_json(const json& j) {
  return {j.at("l1").get<double>(), j.at("conf").get<double>(), j.at("final").get<double>(),
          j.at("total").get<double>()};
}

}  // namespace

void save_checkpoint(const TrainedModel& model, const std::filesystem::path& path) {
  json blocks = json::array();
  std::size_t offset = 0;
  for (const auto& [name, v] : model.model.params().entries()) {
    blocks.push_back({{"name", name}, {"shape", v.shape()}, {"offset", offset}, {"count", v.size()}});
    offset += v.size();
  }
  json standardizers = json::array();
  for (const auto& s : model.standardizers) standardizers.push_back({{"mean", s.mean}, {"stddev", s.stddev}});
  const json header{{"format", kFormat},
                    {"version", kVersion},
                    {"config", to_json(model.config)},
                    {"model", to_json(model.model.spec())},
                    {"best_epoch", model.best_epoch},
                    {"history", to_json(model.history)},
                    {"standardizers", standardizers},
                    {"blocks", blocks}};

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write checkpoint '" + path.string() + "'");
  out << header.dump() << '\n';
  for (const auto& [_, v] : model.model.params().entries()) {
    const auto values = v.value();
    out.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size_bytes()));
  }
  if (!out) throw Error("failed writing checkpoint '" + path.string() + "'");
}

TrainedModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line)) throw DataError("checkpoint '" + path.string() + "' is empty");
  json header;
  try {
    header = json::parse(line);
  } catch (const json::exception& e) {
    throw DataError("checkpoint '" + path.string() + "' has a malformed header: " + e.what());
  }
  if (header.value("format", "") != kFormat || header.value("version", 0) != kVersion)
    throw DataError("'" + path.string() + "' is not a version 1 checkpoint");

  ParameterStore store;
  for (const auto& b : header.at("blocks")) {
    const auto count = b.at("count").get<std::size_t>();
    std::vector<double> values(count);
    in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(count * sizeof(double)));
    if (static_cast<std::size_t>(in.gcount()) != count * sizeof(double))
      throw DataError("checkpoint '" + path.string() + "' is truncated in block '" + b.at("name").get<std::string>() + "'");
    store.add(b.at("name").get<std::string>(), b.at("shape").get<ad::Shape>(), std::move(values));
  }
  if (in.peek() != std::char_traits<char>::eof())
    throw DataError("checkpoint '" + path.string() + "' has trailing bytes");

  TrainedModel out{train_config_from_json(header.at("config")),
                   MultimodalModel(model_spec_from_json(header.at("model")), std::move(store)), {}, 0, {}};
  for (const auto& s : header.at("standardizers"))
    out.standardizers.push_back({s.at("mean").get<std::vector<double>>(), s.at("stddev").get<std::vector<double>>()});
  out.best_epoch = header.at("best_epoch").get<int>();
  for (const auto& r : header.at("history"))
    out.history.push_back({losses_from_json(r.at("train")), losses_from_json(r.at("val")),
                           r.at("val_balanced_accuracy").get<double>()});
  return out;
}

}  // namespace mmdyn
