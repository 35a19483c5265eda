#include "latentdur/data_io.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

namespace latentdur {

using nlohmann::json;

void GenSpec::validate() const {
  auto require = [](bool cond, const char* what) {
    if (!cond) throw std::invalid_argument(std::string("GenSpec: ") + what);
  };
  require(V >= 1, "V must be >= 1");
  require(O >= 1, "O must be >= 1");
  require(n_items >= 0, "n_items must be nonnegative");
  require(U_min >= 1 && U_max >= U_min, "need 1 <= U_min <= U_max");
  require(K >= 1, "K must be >= 1");
  require(g >= 1, "g must be >= 1");
  require(noise_std >= 0.0, "noise_std must be nonnegative");
  require(jitter >= 0, "jitter must be nonnegative");
  require(prototype_scale > 0.0, "prototype_scale must be positive");
  if (!profile.empty()) {
    require(static_cast<int>(profile.size()) == V,
            "profile must list one duration per token");
    for (const int d : profile)
      require(d >= 1 && d <= K, "profile durations must lie in [1, K]");
  }
}

std::string genspec_to_json(const GenSpec& spec) {
  json j;
  j["V"] = spec.V;
  j["O"] = spec.O;
  j["n_items"] = spec.n_items;
  j["U_range"] = {spec.U_min, spec.U_max};
  j["K"] = spec.K;
  j["g"] = spec.g;
  j["noise_std"] = spec.noise_std;
  j["duration_profile"] = spec.profile;
  j["jitter"] = spec.jitter;
  j["prototype_scale"] = spec.prototype_scale;
  return j.dump(2);
}

GenSpec genspec_from_json(const std::string& text) {
  const json j = json::parse(text);
  GenSpec spec;
  auto get = [&j](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  get("V", spec.V);
  get("O", spec.O);
  get("n_items", spec.n_items);
  if (j.contains("U_range")) {
    const auto& r = j.at("U_range");
    spec.U_min = r.at(0).get<int>();
    spec.U_max = r.at(1).get<int>();
  }
  get("K", spec.K);
  get("g", spec.g);
  get("noise_std", spec.noise_std);
  get("duration_profile", spec.profile);
  get("jitter", spec.jitter);
  get("prototype_scale", spec.prototype_scale);
  spec.validate();
  return spec;
}

namespace {

// Orthogonal-ish prototypes: Gram-Schmidt while directions remain,
// random unit vectors afterwards, scaled so each component has RMS
// prototype_scale.
Matrix make_prototypes(const GenSpec& spec, std::mt19937_64& rng) {
  std::normal_distribution<double> unit(0.0, 1.0);
  Matrix proto(spec.V, spec.O);
  for (int v = 0; v < spec.V; ++v) {
    Eigen::RowVectorXd row(spec.O);
    while (true) {
      for (int o = 0; o < spec.O; ++o) row[o] = unit(rng);
      if (v < spec.O) {
        for (int p = 0; p < v; ++p)
          row -= row.dot(proto.row(p)) /
                 proto.row(p).squaredNorm() * proto.row(p);
      }
      if (row.norm() > 1e-6) break;
    }
    proto.row(v) = row / row.norm();
  }
  proto *= spec.prototype_scale * std::sqrt(static_cast<double>(spec.O));
  return proto;
}

}  // namespace

Corpus gen_corpus(const GenSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> token_dist(0, spec.V - 1);
  std::uniform_int_distribution<int> u_dist(spec.U_min, spec.U_max);

  std::vector<int> profile = spec.profile;
  if (profile.empty()) {
    profile.resize(spec.V);
    for (int v = 0; v < spec.V; ++v) profile[v] = 1 + (v % spec.K);
  }

  const Matrix proto = make_prototypes(spec, rng);
  Corpus corpus;
  corpus.items.reserve(spec.n_items);
  for (int i = 0; i < spec.n_items; ++i) {
    CorpusItem item;
    const int u_count = u_dist(rng);
    item.tokens.tokens.resize(u_count);
    item.true_durations.durations.resize(u_count);
    int t_frames = 0;
    for (int u = 0; u < u_count; ++u) {
      const int tok = token_dist(rng);
      int dur = profile[tok];
      if (spec.jitter > 0) {
        const int lo = std::max(1, dur - spec.jitter);
        const int hi = std::min(spec.K, dur + spec.jitter);
        dur = std::uniform_int_distribution<int>(lo, hi)(rng);
      }
      item.tokens.tokens[u] = tok;
      item.true_durations.durations[u] = dur;
      t_frames += dur * spec.g;
    }
    item.frames.frames.resize(t_frames, spec.O);
    int t = 0;
    for (int u = 0; u < u_count; ++u) {
      const int span = item.true_durations.durations[u] * spec.g;
      for (int s = 0; s < span; ++s, ++t) {
        for (int o = 0; o < spec.O; ++o) {
          item.frames.frames(t, o) =
              proto(item.tokens.tokens[u], o) + spec.noise_std * unit(rng);
        }
      }
    }
    corpus.items.push_back(std::move(item));
  }
  return corpus;
}

void save_corpus(const Corpus& corpus, const std::string& path) {
  std::ofstream out(path);
  if (!out)
    throw std::runtime_error("save_corpus: cannot open " + path);
  for (const CorpusItem& item : corpus.items) {
    json j;
    j["tokens"] = item.tokens.tokens;
    json frames;
    frames["rows"] = item.frames.frames.rows();
    frames["cols"] = item.frames.frames.cols();
    json data = json::array();
    for (int t = 0; t < item.frames.frames.rows(); ++t)
      for (int o = 0; o < item.frames.frames.cols(); ++o)
        data.push_back(item.frames.frames(t, o));
    frames["data"] = std::move(data);
    j["frames"] = std::move(frames);
    j["true_durations"] = item.true_durations.durations;
    out << j.dump() << '\n';
  }
  if (!out)
    throw std::runtime_error("save_corpus: write failed for " + path);
}

Corpus load_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in)
    throw std::runtime_error("load_corpus: cannot open " + path);
  Corpus corpus;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fail = [line_no](const std::string& why) {
      std::ostringstream os;
      os << "load_corpus: line " << line_no << ": " << why;
      return std::runtime_error(os.str());
    };
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw fail(e.what());
    }
    try {
      CorpusItem item;
      item.tokens.tokens = j.at("tokens").get<std::vector<int>>();
      const json& frames = j.at("frames");
      const int rows = frames.at("rows").get<int>();
      const int cols = frames.at("cols").get<int>();
      const auto data = frames.at("data").get<std::vector<double>>();
      if (static_cast<long long>(rows) * cols !=
          static_cast<long long>(data.size()))
        throw fail("frame data size does not match dims");
      item.frames.frames.resize(rows, cols);
      for (int t = 0; t < rows; ++t)
        for (int o = 0; o < cols; ++o)
          item.frames.frames(t, o) = data[static_cast<std::size_t>(t) * cols + o];
      item.true_durations.durations =
          j.at("true_durations").get<std::vector<int>>();
      corpus.items.push_back(std::move(item));
    } catch (const json::exception& e) {
      throw fail(e.what());
    }
  }
  return corpus;
}

}  // namespace latentdur
