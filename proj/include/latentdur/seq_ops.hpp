#pragma once

#include "latentdur/types.hpp"

namespace latentdur {

/// Token-level means: row u averages the g * l_u consecutive frames
/// belonging to token u. Requires g * sum(l) == number of frames.
Matrix aggregate(const FrameSequence& x, const DurationSequence& l, int g);

/// Repeats row u of v for g * l_u consecutive output rows, preserving
/// order. The inverse direction of aggregate.
Matrix upsample(const Matrix& v, const DurationSequence& l, int g);

/// g consecutive frames stacked into one super-frame row of width g*O.
/// When T is not divisible by g the last group is padded by repeating
/// the final frame; `padding` records how many copies were added.
struct GroupedFrames {
  Matrix super_frames;  // ceil(T/g) x (g*O)
  int padding = 0;
};

GroupedFrames group_frames(const FrameSequence& x, int g);

}  // namespace latentdur
