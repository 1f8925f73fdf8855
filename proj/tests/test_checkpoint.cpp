#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "mmdyn/checkpoint.hpp"
#include "mmdyn/error.hpp"
#include "mmdyn/evaluation.hpp"

using namespace mmdyn;
namespace fs = std::filesystem;

namespace {

struct Fixture {
  SyntheticResult data;
  SplitSpec split;
  TrainedModel model;
};

Fixture trained() {
  SyntheticSpec s;
  s.sample_count = 90;
  s.class_count = 3;
  s.patient_count = 3;
  SyntheticModalitySpec t;
  t.name = "rna";
  t.features = 5;
  t.planted_count = 2;
  SyntheticModalitySpec img;
  img.name = "img";
  img.kind = ModalityKind::image;
  img.height = 8;
  img.width = 8;
  img.channels = 2;
  img.patch = {4, 4, 4, 4};
  s.modalities = {t, img};
  SyntheticResult r = synthesize_dataset(s, 2);
  SplitSpec split = patient_split(r.dataset, {"P2"}, 0.2, 3);
  TrainConfig c;
  c.epochs = 3;
  c.latent_dims = {{"rna", 3}, {"img", 5}};
  c.fusion_mode = FusionMode::dynamic;
  c.loss_weights = {0.5, 1, 2};
  TrainedModel m = train(c, r.dataset, split);
  return {std::move(r), std::move(split), std::move(m)};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("checkpoints round-trip every part of a trained model") {
  const Fixture f = trained();
  const fs::path dir = fs::temp_directory_path() / "mmdyn_test_checkpoint";
  fs::remove_all(dir);
  fs::create_directories(dir);
  save_checkpoint(f.model, dir / "a.ckpt");
  const TrainedModel back = load_checkpoint(dir / "a.ckpt");

  CHECK(to_json(back.config) == to_json(f.model.config));
  CHECK(to_json(back.model.spec()) == to_json(f.model.model.spec()));
  CHECK(back.best_epoch == f.model.best_epoch);
  CHECK(back.history == f.model.history);
  REQUIRE(back.standardizers.size() == 2);
  CHECK(back.standardizers[1].mean == f.model.standardizers[1].mean);
  const auto& a = f.model.model.params().entries();
  const auto& b = back.model.params().entries();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].first == b[i].first);
    CHECK(std::equal(a[i].second.value().begin(), a[i].second.value().end(), b[i].second.value().begin()));
  }
  const Inference x = run_inference(f.model, f.data.dataset, f.split.test_indices);
  const Inference y = run_inference(back, f.data.dataset, f.split.test_indices);
  CHECK(x.probs == y.probs);

  // Saving the loaded model reproduces the file byte for byte.
  save_checkpoint(back, dir / "b.ckpt");
  CHECK(slurp(dir / "a.ckpt") == slurp(dir / "b.ckpt"));
}

TEST_CASE("damaged checkpoints are rejected") {
  const Fixture f = trained();
  const fs::path dir = fs::temp_directory_path() / "mmdyn_test_checkpoint_bad";
  fs::remove_all(dir);
  fs::create_directories(dir);
  save_checkpoint(f.model, dir / "ok.ckpt");
  const std::string bytes = slurp(dir / "ok.ckpt");

  std::ofstream(dir / "short.ckpt", std::ios::binary) << bytes.substr(0, bytes.size() - 8);
  CHECK_THROWS_WITH_AS(load_checkpoint(dir / "short.ckpt"), doctest::Contains("truncated"), DataError);
  std::ofstream(dir / "long.ckpt", std::ios::binary) << bytes << "x";
  CHECK_THROWS_WITH_AS(load_checkpoint(dir / "long.ckpt"), doctest::Contains("trailing"), DataError);
  std::ofstream(dir / "junk.ckpt", std::ios::binary) << "not json\n";
  CHECK_THROWS_AS(load_checkpoint(dir / "junk.ckpt"), DataError);
  std::ofstream(dir / "other.ckpt", std::ios::binary) << R"({"format":"something-else","version":1})" << "\n";
  CHECK_THROWS_AS(load_checkpoint(dir / "other.ckpt"), DataError);
  std::ofstream(dir / "empty.ckpt", std::ios::binary);
  CHECK_THROWS_AS(load_checkpoint(dir / "empty.ckpt"), DataError);
  CHECK_THROWS_AS(load_checkpoint(dir / "absent.ckpt"), DataError);
}
