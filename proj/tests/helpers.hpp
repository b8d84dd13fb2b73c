#pragma once

#include "facetag/models.hpp"
#include "facetag/synth.hpp"

#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>

namespace testing {

inline facetag::SynthSpec small_spec(std::size_t viewers, std::size_t clips, std::uint64_t seed,
                                     double noise = 0.5) {
    facetag::SynthSpec spec;
    spec.n_viewers = viewers;
    spec.n_clips = clips;
    spec.clip_seconds = 10.0;
    spec.seed = seed;
    spec.noise_level = noise;
    return spec;
}

/// A two-entry grid that keeps model tests fast.
inline std::vector<facetag::HyperParams> tiny_grid() {
    return {{2.0, 0.5, 5, facetag::PcaScope::combined}, {3.0, 0.0, 5, facetag::PcaScope::per_group}};
}

inline double bump(double phase) {  // raised cosine over [0, 1]
    if (phase <= 0.0 || phase >= 1.0) return 0.0;
    return 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * phase));
}

/// A recording over the synthetic channel set with a flat zero signal.
inline facetag::Recording flat_recording(Eigen::Index frames, double fps = 30.0) {
    facetag::Recording r;
    r.viewer_id = "v1";
    r.clip_id = "c1";
    r.series.frame_rate = fps;
    r.series.channels = facetag::synthetic_channels();
    r.series.values = Eigen::MatrixXd::Zero(frames, static_cast<Eigen::Index>(r.series.channels.size()));
    const Eigen::Index margin = std::lround(6.0 * fps);
    r.clip_span = {std::min(margin, frames / 4), std::max(frames - margin, 3 * frames / 4)};
    return r;
}

inline Eigen::Index channel_index(const facetag::Recording& r, const std::string& id) {
    return *r.series.find_channel(id);
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("facetag_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace testing
