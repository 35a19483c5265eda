#include "latentdur/checks.hpp"
#include "latentdur/data_io.hpp"
#include "latentdur/seq_ops.hpp"
#include "latentdur/training.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

namespace {

using namespace latentdur;
using nlohmann::json;

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << text;
  if (!out) throw std::runtime_error("write failed for " + path);
}

int cmd_gen_data(const std::string& spec_path, std::uint64_t seed,
                 const std::string& out_path) {
  const GenSpec spec = genspec_from_json(read_file(spec_path));
  const Corpus corpus = gen_corpus(spec, seed);
  save_corpus(corpus, out_path);
  std::cout << "wrote " << corpus.items.size() << " items to " << out_path
            << "\n";
  return 0;
}

int cmd_train(const std::string& corpus_path, const std::string& config_path,
              const std::string& ckpt_path, const std::string& log_path,
              const TrainConfig& overrides, const std::vector<bool>& has) {
  TrainConfig cfg = config_from_json(read_file(config_path));
  // Scalar flag overrides, in the order registered below.
  if (has[0]) cfg.seed = overrides.seed;
  if (has[1]) cfg.epochs = overrides.epochs;
  if (has[2]) cfg.learning_rate = overrides.learning_rate;
  if (has[3]) cfg.gamma = overrides.gamma;
  if (has[4]) cfg.batch_size = overrides.batch_size;
  if (has[5]) cfg.K = overrides.K;
  if (has[6]) cfg.g = overrides.g;
  if (has[7]) cfg.O = overrides.O;
  if (has[8]) cfg.D = overrides.D;
  cfg.validate();

  const Corpus corpus = load_corpus(corpus_path);
  const TrainRunResult result = run_training(corpus, cfg);

  if (!log_path.empty()) {
    std::ostringstream log;
    for (const std::string& line : result.log_lines) log << line << '\n';
    write_file(log_path, log.str());
  }
  save_checkpoint(ckpt_path, result.params, result.state, cfg);
  std::cout << "steps: " << result.log_lines.size()
            << "  first total: " << result.first_loss.total
            << "  last total: " << result.last_loss.total
            << "  skipped: " << result.total_skipped << "\n";
  return 0;
}

int cmd_align(const std::string& corpus_path, const std::string& ckpt_path,
              const std::string& out_path) {
  const Corpus corpus = load_corpus(corpus_path);
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  const ParamLayout layout(ckpt.params.spec);

  std::ostringstream out;
  long long matched = 0, total = 0;
  for (std::size_t i = 0; i < corpus.items.size(); ++i) {
    const CorpusItem& item = corpus.items[i];
    const GroupedFrames grouped = group_frames(item.frames, ckpt.params.spec.g);
    const EncoderResult enc =
        acoustic_encoder(layout, ckpt.params.values, grouped.super_frames);
    const ScoredAlignment best =
        viterbi_best(enc.em, item.tokens, ckpt.params.spec.K);
    const DurationSequence durations = alignment_to_duration(best.alignment);

    int correct = 0;
    if (durations.size() == item.true_durations.size()) {
      for (int u = 0; u < durations.size(); ++u) {
        if (durations.durations[u] == item.true_durations.durations[u])
          ++correct;
      }
    }
    matched += correct;
    total += item.tokens.size();

    nlohmann::ordered_json line;
    line["item"] = i;
    line["durations"] = durations.durations;
    line["true_durations"] = item.true_durations.durations;
    line["correct"] = correct;
    line["tokens"] = item.tokens.size();
    line["log_score"] = best.log_score;
    out << line.dump() << '\n';
  }
  write_file(out_path, out.str());
  const double accuracy =
      total > 0 ? static_cast<double>(matched) / static_cast<double>(total)
                : 0.0;
  std::cout << "duration accuracy: " << accuracy << " (" << matched << "/"
            << total << ")\n";
  return 0;
}

int cmd_synthesize(const std::string& tokens_text, const std::string& ckpt_path,
                   const std::string& out_path) {
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  TokenSequence y;
  std::istringstream in(tokens_text);
  int id;
  while (in >> id) y.tokens.push_back(id);
  if (y.tokens.empty())
    throw std::invalid_argument("synthesize: no token ids given");
  for (const int t : y.tokens) {
    if (t < 0 || t >= ckpt.params.spec.V)
      throw std::invalid_argument("synthesize: token id outside vocabulary");
  }

  const DurationSequence durations = infer_durations(y, ckpt.params);
  const FrameSequence frames = synthesize(y, ckpt.params);

  nlohmann::ordered_json j;
  j["tokens"] = y.tokens;
  j["durations"] = durations.durations;
  j["rows"] = frames.frames.rows();
  j["cols"] = frames.frames.cols();
  json data = json::array();
  for (int t = 0; t < frames.frames.rows(); ++t)
    for (int o = 0; o < frames.frames.cols(); ++o)
      data.push_back(frames.frames(t, o));
  j["data"] = std::move(data);
  write_file(out_path, j.dump() + "\n");
  std::cout << "synthesized " << frames.frames.rows() << " frames\n";
  return 0;
}

int cmd_dump_trellis(int item, const std::string& corpus_path,
                     const std::string& ckpt_path,
                     const std::string& out_path) {
  const Corpus corpus = load_corpus(corpus_path);
  if (item < 0 || item >= static_cast<int>(corpus.items.size()))
    throw std::invalid_argument("dump-trellis: item index out of range");
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  const ParamLayout layout(ckpt.params.spec);

  const CorpusItem& ci = corpus.items[item];
  const GroupedFrames grouped = group_frames(ci.frames, ckpt.params.spec.g);
  const EncoderResult enc =
      acoustic_encoder(layout, ckpt.params.values, grouped.super_frames);
  const Trellis tr = forward_backward(enc.em, ci.tokens, ckpt.params.spec.K);
  write_file(out_path, trellis_to_json(tr) + "\n");
  std::cout << "dumped trellis for item " << item << " (T'=" << tr.T
            << ", U=" << tr.U << ", K=" << tr.K << ")\n";
  return 0;
}

int cmd_check(std::uint64_t seed) {
  const std::vector<CheckResult> results = run_all_checks(seed);
  std::size_t name_width = 0;
  for (const CheckResult& r : results)
    name_width = std::max(name_width, r.name.size());
  for (const CheckResult& r : results) {
    std::cout << (r.pass ? "PASS  " : "FAIL  ") << r.name
              << std::string(name_width - r.name.size() + 2, ' ') << r.detail
              << "\n";
  }
  return all_pass(results) ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Latent-duration alignment and synthesis toolkit"};
  app.require_subcommand(1);

  std::string spec_path, corpus_path, config_path, ckpt_path, out_path,
      log_path, tokens_text;
  std::uint64_t seed = 0;
  int item = 0;
  TrainConfig overrides;
  std::vector<bool> has(9, false);

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic corpus");
  gen->add_option("--spec", spec_path, "GenSpec JSON")->required();
  gen->add_option("--seed", seed, "RNG seed");
  gen->add_option("--out", out_path, "Output corpus (JSON lines)")->required();

  auto* train = app.add_subcommand("train", "Train on a corpus");
  train->add_option("--corpus", corpus_path, "Corpus JSONL")->required();
  train->add_option("--config", config_path, "TrainConfig JSON")->required();
  train->add_option("--out", ckpt_path, "Checkpoint output")->required();
  train->add_option("--log", log_path, "Per-step JSONL training log");
  train->add_option("--seed", overrides.seed)->each([&](const std::string&) {
    has[0] = true;
  });
  train->add_option("--epochs", overrides.epochs)
      ->each([&](const std::string&) { has[1] = true; });
  train->add_option("--lr", overrides.learning_rate)
      ->each([&](const std::string&) { has[2] = true; });
  train->add_option("--gamma", overrides.gamma)
      ->each([&](const std::string&) { has[3] = true; });
  train->add_option("--batch-size", overrides.batch_size)
      ->each([&](const std::string&) { has[4] = true; });
  train->add_option("--K", overrides.K)->each([&](const std::string&) {
    has[5] = true;
  });
  train->add_option("--g", overrides.g)->each([&](const std::string&) {
    has[6] = true;
  });
  train->add_option("--O", overrides.O)->each([&](const std::string&) {
    has[7] = true;
  });
  train->add_option("--D", overrides.D)->each([&](const std::string&) {
    has[8] = true;
  });

  auto* align = app.add_subcommand("align", "Viterbi durations vs ground truth");
  align->add_option("--corpus", corpus_path, "Corpus JSONL")->required();
  align->add_option("--ckpt", ckpt_path, "Checkpoint")->required();
  align->add_option("--out", out_path, "Per-item durations JSONL")->required();

  auto* synth = app.add_subcommand("synthesize", "Prior + decoder inference");
  synth->add_option("--tokens", tokens_text, "Whitespace-separated token ids")
      ->required();
  synth->add_option("--ckpt", ckpt_path, "Checkpoint")->required();
  synth->add_option("--out", out_path, "Frames JSON")->required();

  auto* dump = app.add_subcommand("dump-trellis", "Export one item's trellis");
  dump->add_option("--item", item, "Item index")->required();
  dump->add_option("--corpus", corpus_path, "Corpus JSONL")->required();
  dump->add_option("--ckpt", ckpt_path, "Checkpoint")->required();
  dump->add_option("--out", out_path, "Trellis JSON")->required();

  auto* check = app.add_subcommand(
      "check", "Invariant, gradient and oracle-equivalence suite");
  check->add_option("--seed", seed, "RNG seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(spec_path, seed, out_path);
    if (train->parsed())
      return cmd_train(corpus_path, config_path, ckpt_path, log_path,
                       overrides, has);
    if (align->parsed()) return cmd_align(corpus_path, ckpt_path, out_path);
    if (synth->parsed())
      return cmd_synthesize(tokens_text, ckpt_path, out_path);
    if (dump->parsed())
      return cmd_dump_trellis(item, corpus_path, ckpt_path, out_path);
    if (check->parsed()) return cmd_check(seed);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
