#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "negmine/checkpoint.hpp"
#include "negmine/cli.hpp"
#include "negmine/config.hpp"
#include "negmine/dataset.hpp"
#include "negmine/hashing.hpp"
#include "negmine/reports.hpp"

using namespace negmine;
namespace fs = std::filesystem;

namespace {

// Fresh scratch directory per test, removed afterwards.
class TempDir : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() /
           (std::string("negmine_") + info->test_suite_name() + "_" + info->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  fs::path dir_;
};

NetworkSpec small_spec() {
  NetworkSpec s;
  s.input_size = 16;
  s.depth = 2;
  s.base_channels = 4;
  s.inception_levels = {2};
  return s;
}

const char* kTinyConfig =
    "seed = 3\n"
    "image_size = 16\n"
    "n_labeled = 9\n"
    "n_unlabeled = 6\n"
    "n_true_negative = 4\n"
    "nodule_radius_min = 1.5\n"
    "nodule_radius_max = 3\n"
    "depth = 2\n"
    "base_channels = 4\n"
    "inception_levels = 2\n"
    "epochs = 1\n"
    "batch_size = 4\n"
    "folds = 3\n";

std::string slurp(const fs::path& p) { return read_text_file(p); }

int cli(std::vector<std::string> args) {
  args.insert(args.begin(), "negmine");
  return run_cli(args);
}

}  // namespace

// ------------------------------------------------------------- hashing

TEST(Hashing, KnownDigests) {
  EXPECT_EQ(sha256_hex(std::string_view("abc")),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  const std::string text = "123456789";
  EXPECT_EQ(crc32(std::span<const std::uint8_t>(
                reinterpret_cast<const std::uint8_t*>(text.data()), text.size())),
            0xCBF43926u);
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
}

// ---------------------------------------------------------- checkpoint

TEST(Checkpoint, RoundTripWithOptimizer) {
  const ParameterSet p = build_network(small_spec(), 2);
  AdamState st = adam_init(p);
  ParameterSet q = p;
  adam_step(st, q, p);
  const Checkpoint ck = decode_checkpoint(encode_checkpoint(q, &st));
  EXPECT_EQ(ck.params, q);
  ASSERT_TRUE(ck.optimizer.has_value());
  EXPECT_EQ(*ck.optimizer, st);
  EXPECT_FALSE(decode_checkpoint(encode_checkpoint(q)).optimizer.has_value());
}

TEST(Checkpoint, CorruptionDetected) {
  const auto bytes = encode_checkpoint(build_network(small_spec(), 2));
  auto flipped = bytes;
  flipped[flipped.size() / 2] ^= 0x40;
  EXPECT_THROW(decode_checkpoint(flipped), CheckpointError);
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(decode_checkpoint(bad_magic), CheckpointError);
  EXPECT_THROW(decode_checkpoint({bytes.begin(), bytes.begin() + 20}), CheckpointError);
}

TEST(Checkpoint, LayerMismatchListsBothSets) {
  ParameterSet p = build_network(small_spec(), 2);
  p.layers.erase(p.layers.begin());
  try {
    require_layers_match(p, small_spec());
    FAIL() << "no error";
  } catch (const SpecError& e) {
    EXPECT_NE(std::string(e.what()).find("checkpoint:"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("spec:"), std::string::npos);
  }
  EXPECT_NO_THROW(require_layers_match(build_network(small_spec(), 1), small_spec()));
}

// --------------------------------------------------------------- config

TEST(Config, DefaultsAndRoundTrip) {
  const RunConfig c = parse_config("seed = 11  # trailing comment\n\n");
  EXPECT_EQ(c.synth.seed, 11u);
  EXPECT_EQ(c.training.seed, 11u);
  EXPECT_EQ(c.synth.n_labeled, 200);
  EXPECT_EQ(c.training.network.input_size, 64);
  EXPECT_FALSE(c.training.mining_threshold.has_value());
  EXPECT_EQ(parse_config(format_config(c)), c);

  const RunConfig t = parse_config(kTinyConfig);
  EXPECT_EQ(t.training.network.input_size, 16);
  EXPECT_EQ(t.training.network.inception_levels, (std::set<int>{2}));
  EXPECT_EQ(parse_config(format_config(t)), t);

  const RunConfig m = parse_config("seed = 1\nmining_threshold = 0.35\nlearning_rate = 3e-4\n");
  EXPECT_EQ(*m.training.mining_threshold, 0.35);
  EXPECT_EQ(m.training.adam.lr, 3e-4);
  EXPECT_EQ(parse_config(format_config(m)), m);
}

TEST(Config, Errors) {
  auto error_of = [](const std::string& text) -> std::pair<int, std::string> {
    try {
      parse_config(text);
    } catch (const ConfigError& e) {
      return {e.line(), e.key()};
    }
    return {-1, ""};
  };
  EXPECT_EQ(error_of("seed = 1\nbogus = 3\n"), std::make_pair(2, std::string("bogus")));
  EXPECT_EQ(error_of("seed = 1\nseed = 2\n"), std::make_pair(2, std::string("seed")));
  EXPECT_EQ(error_of("seed = 1\nepochs =\n"), std::make_pair(2, std::string("epochs")));
  EXPECT_EQ(error_of("seed = 1\nepochs = two\n"), std::make_pair(2, std::string("epochs")));
  EXPECT_EQ(error_of("seed = 1\njust text\n").first, 2);
  EXPECT_EQ(error_of("epochs = 2\n"), std::make_pair(0, std::string("seed")));
  EXPECT_EQ(error_of("seed = 1\nmix_ratio = 0\n").first, 0);
  EXPECT_EQ(error_of("seed = 1\nimage_size = 60\n").first, 0);
  EXPECT_THROW(load_config("/nonexistent/negmine.conf"), ConfigError);
}

// -------------------------------------------------------------- dataset

TEST_F(TempDir, DatasetRoundTripAndHashCheck) {
  const RunConfig cfg = parse_config(kTinyConfig);
  const SynthDataset ds = generate_dataset(cfg.synth);
  const fs::path root = dir_ / "data";
  const DatasetManifest m = write_dataset(ds, cfg, root);
  EXPECT_EQ(m.entries.size(), 19u);
  EXPECT_EQ(read_manifest(root).entries.size(), 19u);

  const LoadedDataset back = load_dataset(root);
  ASSERT_EQ(back.labeled.size(), ds.labeled.size());
  for (std::size_t i = 0; i < ds.labeled.size(); ++i) {
    EXPECT_EQ(back.labeled[i].id, ds.labeled[i].id);
    EXPECT_EQ(back.labeled[i].image, ds.labeled[i].image);
    EXPECT_EQ(back.labeled[i].mask, ds.labeled[i].mask);
  }
  EXPECT_EQ(back.unlabeled.size(), 6u);
  EXPECT_EQ(back.true_negatives.size(), 4u);
  const auto audit = load_audit(root);
  for (const auto& u : ds.unlabeled) EXPECT_EQ(audit.at(u.id), ds.hidden_truth.at(u.id));

  EXPECT_THROW(write_dataset(ds, cfg, root), DatasetError);  // not empty

  // Tampering with an image is caught by its hash.
  const fs::path img = root / m.entries.front().image;
  std::ofstream(img, std::ios::binary | std::ios::app) << 'x';
  EXPECT_THROW(load_dataset(root), DatasetError);
}

TEST(Dataset, MaskLevels) {
  NoduleMask m(2, 1);
  m.at(1, 0) = 1;
  const Image img = mask_to_image(m);
  EXPECT_EQ(img.pixels, (std::vector<std::uint8_t>{0, 255}));
  EXPECT_EQ(mask_from_image(img), m);
  EXPECT_THROW(mask_from_image(Image(2, 1, std::vector<std::uint8_t>{0, 128})), DatasetError);
}

// -------------------------------------------------------------- reports

TEST(Reports, CrossvalCsvAvgRow) {
  CrossValidationResult r;
  for (int f = 1; f <= 2; ++f) {
    FoldReport rep;
    rep.fold = f;
    rep.phase1.operating_point.report.sensitivity = 0.9;
    rep.phase1.operating_point.report.fp_per_image = f;
    rep.phase2.evaluation.operating_point.report.sensitivity = 0.8 + 0.1 * f;
    rep.phase2.evaluation.operating_point.report.fp_per_image = 0.5;
    rep.delta_sensitivity = 0.1 * f - 0.1;
    rep.delta_fp_per_image = 0.5 - f;
    r.folds.push_back(rep);
  }
  r.phase1_sensitivity = 0.9;
  r.phase1_fp_per_image = 1.5;
  r.phase2_sensitivity = 0.95;
  r.phase2_fp_per_image = 0.5;
  r.delta_sensitivity = 0.05;
  r.delta_fp_per_image = -1.0;
  const std::string csv = crossval_csv(r);
  EXPECT_EQ(csv,
            "fold,phase1_sensitivity,phase1_fp_per_image,phase2_sensitivity,phase2_fp_per_image,"
            "diff_sensitivity,diff_fp_per_image\n"
            "1,0.900000,1.000000,0.900000,0.500000,0.000000,-0.500000\n"
            "2,0.900000,2.000000,1.000000,0.500000,0.100000,-1.500000\n"
            "Avg,0.900000,1.500000,0.950000,0.500000,0.050000,-1.000000\n");
}

TEST(Reports, ComparisonCsvSkipsAbsentRows) {
  ComparisonResult c;
  c.rows = {{NegativeSource::approved, false, 0, 0, 0},
            {NegativeSource::pseudo_negative, true, 0.9, 0.2, 5},
            {NegativeSource::unlabeled, true, 0.85, 0.3, 5}};
  EXPECT_EQ(comparison_csv(c),
            "source,sensitivity,fp_per_scan\n"
            "pseudonegative,0.900000,0.200000\n"
            "unlabeled,0.850000,0.300000\n");
}

TEST(Reports, TrainingLogLeavesMissingExtraEmpty) {
  TrainingLog log;
  log.epochs = {{1, 0.5, NAN}, {2, 0.25, 0.125}};
  EXPECT_EQ(training_log_csv(log), "epoch,loss,extra_loss\n1,0.500000,\n2,0.250000,0.125000\n");
}

TEST(Reports, MiningManifestRoundTrip) {
  MiningOutcome m;
  m.threshold = 0.42;
  m.pseudo_negative_ids = {"U0002", "U0000"};
  m.discarded_ids = {"U0001"};
  m.detection_counts = {{"U0000", 0}, {"U0001", 3}, {"U0002", 0}};
  m.checkpoint_hash = "abc";
  EXPECT_EQ(parse_mining_manifest(mining_manifest_json(m)), m);
  EXPECT_THROW(parse_mining_manifest("{\"threshold\": 1}"), ReportError);
}

TEST(Reports, TimestampFormat) {
  const std::string ts = utc_timestamp();
  ASSERT_EQ(ts.size(), 20u);
  EXPECT_EQ(ts[10], 'T');
  EXPECT_EQ(ts.back(), 'Z');
}

// ------------------------------------------------------------------ cli

TEST_F(TempDir, CliWorkflow) {
  const fs::path conf = dir_ / "tiny.conf";
  write_text_file(conf, kTinyConfig);
  const std::string c = conf.string(), d = (dir_ / "data").string();

  ASSERT_EQ(cli({"--config", c, "--out", d, "generate"}), 0);
  EXPECT_EQ(cli({"--config", c, "--out", d, "generate"}), 2);  // exists, no --force
  ASSERT_EQ(cli({"--config", c, "--out", d, "--force", "generate"}), 0);

  const std::string p1 = (dir_ / "p1").string();
  ASSERT_EQ(cli({"--config", c, "--out", p1, "train", "--data", d, "--fold", "1"}), 0);
  const fs::path ck = fs::path(p1) / "checkpoint.nmck";
  ASSERT_TRUE(fs::exists(ck));
  EXPECT_TRUE(load_checkpoint(ck).optimizer.has_value());

  // Phase 2 without a checkpoint is a usage error.
  EXPECT_EQ(cli({"--config", c, "--out", (dir_ / "bad").string(), "train", "--data", d,
                 "--phase", "2"}),
            2);
  EXPECT_EQ(cli({"--config", c, "--out", (dir_ / "m0").string(), "mine", "--data", d,
                 "--checkpoint", ck.string()}),
            2);  // no threshold anywhere

  const std::string m1 = (dir_ / "m1").string(), m2 = (dir_ / "m2").string();
  for (const auto& out : {m1, m2}) {
    ASSERT_EQ(cli({"--config", c, "--out", out, "mine", "--data", d, "--checkpoint", ck.string(),
                   "--threshold", "0.5"}),
              0);
  }
  EXPECT_EQ(slurp(fs::path(m1) / "mining_manifest.json"), slurp(fs::path(m2) / "mining_manifest.json"));
  const MiningOutcome mined = parse_mining_manifest(slurp(fs::path(m1) / "mining_manifest.json"));
  EXPECT_EQ(mined.checkpoint_hash, sha256_file(ck));
  EXPECT_EQ(mined.pseudo_negative_ids.size() + mined.discarded_ids.size(), 6u);

  const std::string p2 = (dir_ / "p2").string();
  ASSERT_EQ(cli({"--config", c, "--out", p2, "train", "--data", d, "--phase", "2", "--fold", "1",
                 "--checkpoint", ck.string(), "--mining-manifest",
                 (fs::path(m1) / "mining_manifest.json").string()}),
            0);

  const std::string ev = (dir_ / "ev").string();
  ASSERT_EQ(cli({"--config", c, "--out", ev, "evaluate", "--data", d, "--oracle"}), 0);
  const std::string froc = slurp(fs::path(ev) / "froc.csv");
  EXPECT_NE(froc.find(",0.990000,1.000000,0.000000\n"), std::string::npos);
  EXPECT_NE(froc.find(",0.010000,1.000000,0.000000\n"), std::string::npos);

  // The run manifest lists every output with its hash.
  const auto manifest = nlohmann::json::parse(slurp(fs::path(p2) / "run_manifest.json"));
  EXPECT_EQ(manifest.at("outputs").at("checkpoint.nmck").get<std::string>(),
            sha256_file(fs::path(p2) / "checkpoint.nmck"));
  EXPECT_TRUE(manifest.at("inputs").contains("checkpoint"));
  EXPECT_FALSE(manifest.at("version").get<std::string>().empty());
  EXPECT_FALSE(manifest.at("timestamp").get<std::string>().empty());
}

TEST_F(TempDir, CliCrossvalAndCompare) {
  const fs::path conf = dir_ / "tiny.conf";
  write_text_file(conf, kTinyConfig);
  const std::string c = conf.string(), d = (dir_ / "data").string();
  ASSERT_EQ(cli({"--config", c, "--out", d, "generate"}), 0);

  const std::string cv = (dir_ / "cv").string();
  ASSERT_EQ(cli({"--config", c, "--out", cv, "crossval", "--data", d}), 0);
  const std::string table1 = slurp(fs::path(cv) / "table1.csv");
  EXPECT_EQ(std::count(table1.begin(), table1.end(), '\n'), 5);  // header, 3 folds, Avg
  EXPECT_NE(table1.find("\nAvg,"), std::string::npos);
  EXPECT_FALSE(fs::exists(fs::path(cv) / "table2.csv"));

  const std::string cmp = (dir_ / "cmp").string();
  ASSERT_EQ(cli({"--config", c, "--out", cmp, "--seed", "4", "compare", "--data", d}), 0);
  const std::string table2 = slurp(fs::path(cmp) / "table2.csv");
  EXPECT_EQ(table2.rfind("source,sensitivity,fp_per_scan\napproved,", 0), 0u);
  EXPECT_NE(table2.find("\npseudonegative,"), std::string::npos);
  EXPECT_NE(table2.find("\nunlabeled,"), std::string::npos);
  EXPECT_NE(slurp(fs::path(cmp) / "config.txt").find("seed = 4\n"), std::string::npos);
}

TEST(Cli, UsageErrors) {
  EXPECT_EQ(cli({}), 2);
  EXPECT_EQ(cli({"frobnicate"}), 2);
  EXPECT_EQ(cli({"--out", "/tmp/x", "generate"}), 2);  // no --config
  EXPECT_EQ(cli({"--version"}), 0);
}
