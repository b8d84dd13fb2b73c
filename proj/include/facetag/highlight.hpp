#pragma once

#include "facetag/core.hpp"

#include <Eigen/Core>

namespace facetag {

inline constexpr double kHighlightSeconds = 6.0;
inline constexpr double kSearchMarginSeconds = 6.0;

/// The fixed-length sub-interval of maximal gesture activity.
struct HighlightWindow {
    Eigen::Index start_frame = 0;
    Eigen::Index length_frames = 0;

    FrameRange range() const { return {start_frame, start_frame + length_frames}; }
    friend bool operator==(const HighlightWindow&, const HighlightWindow&) = default;
};

/// round(6 s * frame_rate).
Eigen::Index highlight_length(double frame_rate);

/// Clip span widened by the 6 s margins, clamped to the recording.
FrameRange highlight_search_span(const Recording& recording);

struct GestureSignal {
    FrameRange span;          // frames covered by `values`
    Eigen::VectorXd values;   // one value per frame of `span`
};

/// Mean of the five gesture groups (smile, blink, dimple, lip stretch, frown),
/// each group being the mean z-score of its non-constant channels over the
/// search span. The smile group holds both lip corners.
GestureSignal gesture_aggregate(const Recording& recording, const GestureChannels& gestures);

/// Window maximizing z(window mean) + z(window variance) of the gesture
/// aggregate over every start frame in the search span; earliest start wins
/// ties. Throws InvalidArgument if the span is shorter than the window.
HighlightWindow localize_highlight(const Recording& recording, const GestureChannels& gestures);

/// Window start relative to the clip end, in seconds (negative = before end).
double start_relative_to_clip_end(const Recording& recording, const HighlightWindow& window);

}  // namespace facetag
