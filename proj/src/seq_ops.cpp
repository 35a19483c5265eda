#include "latentdur/seq_ops.hpp"

#include <sstream>

namespace latentdur {

Matrix aggregate(const FrameSequence& x, const DurationSequence& l, int g) {
  if (g < 1) throw std::invalid_argument("aggregate: g must be >= 1");
  const long long expected = static_cast<long long>(l.total()) * g;
  if (expected != x.num_frames()) {
    std::ostringstream os;
    os << "aggregate: durations cover " << expected << " frames but input has "
       << x.num_frames();
    throw std::invalid_argument(os.str());
  }
  Matrix out(l.size(), x.dim());
  int t = 0;
  for (int u = 0; u < l.size(); ++u) {
    const int span = l.durations[u] * g;
    if (span < 1) throw std::invalid_argument("aggregate: duration < 1");
    out.row(u) = x.frames.middleRows(t, span).colwise().mean();
    t += span;
  }
  return out;
}

Matrix upsample(const Matrix& v, const DurationSequence& l, int g) {
  if (g < 1) throw std::invalid_argument("upsample: g must be >= 1");
  if (v.rows() != l.size())
    throw std::invalid_argument("upsample: row count != duration count");
  Matrix out(static_cast<long long>(l.total()) * g, v.cols());
  int t = 0;
  for (int u = 0; u < l.size(); ++u) {
    const int span = l.durations[u] * g;
    if (span < 1) throw std::invalid_argument("upsample: duration < 1");
    out.middleRows(t, span) = v.row(u).replicate(span, 1);
    t += span;
  }
  return out;
}

GroupedFrames group_frames(const FrameSequence& x, int g) {
  if (g < 1) throw std::invalid_argument("group_frames: g must be >= 1");
  if (x.num_frames() < 1)
    throw std::invalid_argument("group_frames: empty frame sequence");
  const int t_frames = x.num_frames();
  const int o = x.dim();
  const int t_super = (t_frames + g - 1) / g;

  GroupedFrames out;
  out.padding = t_super * g - t_frames;
  out.super_frames.resize(t_super, static_cast<long long>(g) * o);
  for (int s = 0; s < t_super; ++s) {
    for (int j = 0; j < g; ++j) {
      const int t = std::min(s * g + j, t_frames - 1);
      out.super_frames.block(s, j * o, 1, o) = x.frames.row(t);
    }
  }
  return out;
}

}  // namespace latentdur
