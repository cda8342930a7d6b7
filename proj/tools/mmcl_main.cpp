#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "mmcl/augment.hpp"
#include "mmcl/config.hpp"
#include "mmcl/corpus.hpp"
#include "mmcl/model.hpp"
#include "mmcl/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "mmcl 0.1.0";
constexpr int kExitConfigError = 2;
constexpr int kExitDataError = 3;

struct RunPaths {
  fs::path config = "config.txt";
  fs::path vocab = "vocab.txt";
  fs::path checkpoint = "checkpoint.bin";
};

mmcl::Model load_model(const fs::path& run_dir) {
  const RunPaths paths;
  mmcl::TrainConfig config = mmcl::load_config_file(run_dir / paths.config);
  mmcl::Vocabulary vocab = mmcl::load_vocabulary((run_dir / paths.vocab).string());
  mmcl::Model model(std::move(vocab), config);
  model.load(run_dir / paths.checkpoint);
  return model;
}

int cmd_train(const std::string& config_path, const std::string& train_path,
              const std::string& dev_path, const std::string& out_dir,
              std::int64_t seed_override) {
  mmcl::TrainConfig config;
  if (!config_path.empty()) config = mmcl::load_config_file(config_path);
  if (seed_override >= 0) config.seed = static_cast<std::uint64_t>(seed_override);
  config.validate();

  std::vector<mmcl::Utterance> train_set = mmcl::load_dataset(train_path);
  std::vector<mmcl::Utterance> dev_set = mmcl::load_dataset(dev_path);
  if (train_set.empty()) throw mmcl::ParseError("training file has no utterances");

  const fs::path out(out_dir);
  fs::create_directories(out);

  // Manifest goes down before any training happens.
  json manifest = {{"version", kVersion},
                   {"seed", config.seed},
                   {"train_path", train_path},
                   {"dev_path", dev_path},
                   {"out_dir", out_dir},
                   {"config", mmcl::config_to_text(config)}};
  std::ofstream(out / "manifest.json") << manifest.dump(2) << "\n";

  mmcl::Vocabulary vocab = mmcl::build_vocabularies(train_set);
  mmcl::save_vocabulary((out / "vocab.txt").string(), vocab);
  std::ofstream(out / "config.txt") << mmcl::config_to_text(config);

  mmcl::Model model(vocab, config);
  mmcl::Trainer trainer(model, config);
  mmcl::TrainResult result = trainer.train(train_set, dev_set, out);

  std::cout << "epochs_run " << result.epochs_run << "\n"
            << "best_epoch " << result.best_epoch << "\n"
            << "best_dev_overall_acc " << result.best_dev_overall << "\n"
            << "checkpoint " << (out / "checkpoint.bin").string() << "\n";
  return 0;
}

int cmd_eval(const std::string& model_dir, const std::string& data_path,
             const std::string& report_path) {
  mmcl::Model model = load_model(model_dir);
  std::vector<mmcl::Utterance> data = mmcl::load_dataset(data_path);
  mmcl::EvalReport report = mmcl::evaluate(model, data);
  if (!report_path.empty()) {
    std::ofstream(report_path) << report.to_json() << "\n";
  }
  std::cout << "overall_acc " << report.overall_acc << "\n"
            << "slot_f1 " << report.slot_f1 << "\n"
            << "intent_acc " << report.intent_acc << "\n";
  return 0;
}

// Input blocks carry tokens only, one per line, blank line between utterances.
std::vector<std::vector<std::string>> read_token_blocks(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw mmcl::ParseError("cannot open input file: " + path);
  std::vector<std::vector<std::string>> blocks;
  std::vector<std::string> current;
  std::string line;
  while (std::getline(in, line)) {
    const auto start = line.find_first_not_of(" \t\r");
    if (start == std::string::npos) {
      if (!current.empty()) blocks.push_back(std::move(current));
      current = {};
      continue;
    }
    const auto end = line.find_last_not_of(" \t\r");
    current.push_back(line.substr(start, end - start + 1));
  }
  if (!current.empty()) blocks.push_back(std::move(current));
  return blocks;
}

int cmd_predict(const std::string& model_dir, const std::string& input_path,
                const std::string& output_path) {
  mmcl::Model model = load_model(model_dir);
  std::vector<std::vector<std::string>> blocks = read_token_blocks(input_path);
  std::ostringstream buffer;
  bool first = true;
  for (const auto& tokens : blocks) {
    mmcl::Utterance u;
    u.tokens = tokens;
    u.slot_tags.assign(tokens.size(), "O");  // placeholders; not read by forward
    mmcl::Prediction pred = mmcl::predict_utterance(model, u);
    mmcl::Utterance labeled{tokens, pred.slot_tags, pred.intents};
    if (!first) buffer << "\n";
    buffer << mmcl::format_utterance(labeled);
    first = false;
  }
  // The emitted blocks must round-trip through the dataset parser.
  if (mmcl::parse_dataset(buffer.str()).size() != blocks.size()) {
    throw mmcl::ParseError("predict: output does not re-parse to the input count");
  }
  std::ofstream out(output_path);
  if (!out) throw mmcl::ParseError("cannot open output file: " + output_path);
  out << buffer.str();
  std::cout << "predicted " << blocks.size() << " utterances -> " << output_path
            << "\n";
  return 0;
}

int cmd_augment(const std::string& train_path, int count, std::uint64_t seed,
                const std::string& manifest_path) {
  std::vector<mmcl::Utterance> train_set = mmcl::load_dataset(train_path);
  if (train_set.size() < 2) {
    throw mmcl::ParseError("augment needs at least 2 utterances");
  }
  mmcl::SlotDictionary dict = mmcl::build_slot_dictionary(train_set);
  std::mt19937_64 rng(seed);

  for (int i = 0; i < count; ++i) {
    const mmcl::Utterance& base =
        train_set[static_cast<std::size_t>(rng() % train_set.size())];
    mmcl::PositiveUtterance pos = mmcl::generate_positive(base, dict, rng);
    std::cout << "# base\n"
              << mmcl::format_utterance(base) << "# positive\n"
              << mmcl::format_utterance(pos.utterance) << "\n";
  }

  // Pair manifest for one batch over the first utterances.
  const std::size_t batch_size = std::min<std::size_t>(4, train_set.size());
  std::vector<mmcl::Utterance> batch(train_set.begin(),
                                     train_set.begin() +
                                         static_cast<std::ptrdiff_t>(batch_size));
  std::vector<mmcl::PositiveUtterance> positives;
  for (const mmcl::Utterance& u : batch) {
    positives.push_back(mmcl::generate_positive(u, dict, rng));
  }
  mmcl::ContrastiveBatch pairs = mmcl::build_batch_pairs(batch, positives, rng, 8);
  const std::string manifest = mmcl::pair_manifest_json(pairs);
  if (!manifest_path.empty()) {
    std::ofstream(manifest_path) << manifest;
    std::cout << "pair manifest -> " << manifest_path << "\n";
  } else {
    std::cout << manifest;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MMCL: joint multi-intent detection and slot filling"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  auto* train = app.add_subcommand("train", "Train a model");
  std::string train_config, train_train, train_dev, train_out;
  std::int64_t train_seed = -1;
  train->add_option("--config", train_config, "key=value config file");
  train->add_option("--train", train_train, "training set (AGIF layout)")->required();
  train->add_option("--dev", train_dev, "dev set for early stopping")->required();
  train->add_option("--out", train_out, "output directory")->required();
  train->add_option("--seed", train_seed, "seed override");

  auto* eval = app.add_subcommand("eval", "Evaluate a trained model");
  std::string eval_model, eval_data, eval_report;
  eval->add_option("--model", eval_model, "run directory from train")->required();
  eval->add_option("--data", eval_data, "dataset to score")->required();
  eval->add_option("--report", eval_report, "where to write the report JSON");

  auto* predict = app.add_subcommand("predict", "Label token blocks");
  std::string pred_model, pred_input, pred_output;
  predict->add_option("--model", pred_model, "run directory from train")->required();
  predict->add_option("--input", pred_input, "blocks of tokens, one per line")
      ->required();
  predict->add_option("--output", pred_output, "AGIF-layout predictions")->required();

  auto* augment = app.add_subcommand("augment", "Inspect slot-substitution output");
  std::string aug_train, aug_manifest;
  int aug_count = 5;
  std::uint64_t aug_seed = 1;
  augment->add_option("--train", aug_train, "training set")->required();
  augment->add_option("--n", aug_count, "number of (base, positive) samples");
  augment->add_option("--seed", aug_seed, "rng seed");
  augment->add_option("--manifest", aug_manifest, "write the pair manifest here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitConfigError;
  }

  try {
    if (*train) {
      return cmd_train(train_config, train_train, train_dev, train_out, train_seed);
    }
    if (*eval) return cmd_eval(eval_model, eval_data, eval_report);
    if (*predict) return cmd_predict(pred_model, pred_input, pred_output);
    if (*augment) return cmd_augment(aug_train, aug_count, aug_seed, aug_manifest);
  } catch (const mmcl::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const mmcl::ParseError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitDataError;
  } catch (const mmcl::TagError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitDataError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
