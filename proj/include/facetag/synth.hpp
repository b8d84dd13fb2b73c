#pragma once

#include "facetag/core.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace facetag {

struct SynthSpec {
    std::size_t n_viewers = 26;
    std::size_t n_clips = 18;
    double clip_seconds = 20.0;
    double frame_rate = 30.0;
    std::uint64_t seed = 0;
    double noise_level = 0.5;
    /// How strongly the planted gestures track each scale; keys are scale names.
    std::map<std::string, double> effect_strengths = {
        {"valence", 1.0}, {"arousal", 1.0}, {"likability", 1.0}, {"rewatch", 1.0}};
    bool discrete_reports = false;
    /// Mean and spread of the burst start relative to the clip end, seconds.
    double burst_offset_mean = -7.22;
    double burst_offset_sd = 4.14;
};

/// Throws InvalidArgument describing the first broken constraint.
void validate_synth_spec(const SynthSpec& spec);

/// What the generator planted in one recording.
struct PlantedBurst {
    std::string viewer_id;
    std::string clip_id;
    Eigen::Index start_frame = 0;   // burst occupies [start, start + length)
    Eigen::Index length_frames = 0;
    std::size_t smiles = 0;         // raised-cosine bumps on both lip corners
    std::size_t blinks = 0;         // blinks inside the burst
    std::size_t level_switches = 0; // level changes on lip-stretch/frown channels
    std::size_t background_blinks = 0;
};

struct SynthCorpus {
    Corpus corpus;
    std::vector<PlantedBurst> bursts;      // same order as corpus.recordings()
    std::vector<double> clip_burst_offset; // per clip (sorted ids), seconds from clip end
};

/// The 51 AU channel ids used for synthetic data and their gesture roles.
const std::vector<std::string>& synthetic_channels();
GestureChannels synthetic_gestures();

/// Deterministic in the spec. Draw order (one Rng seeded with spec.seed):
///   1. per clip: 4 uniforms for the tag (valence, arousal, likability, rewatch)
///   2. per clip: 1 normal for the burst offset; the offsets are standardized
///      across clips, then mapped to mean/sd and clamped into the clip
///   3. per viewer: 1 normal for expressiveness gain, then per clip in order:
///      4 normals (report noise), 8 normals (burst jitter), 4 uniforms
///      (background blink positions), 1 + 41 uniforms (level sequence),
///      51 uniforms (baseline levels), then 51 x frames normals of baseline
///      noise, channel by channel
/// Every draw happens regardless of noise_level, so noise only scales values.
SynthCorpus generate_synthetic(const SynthSpec& spec);

inline Corpus generate_synthetic_corpus(const SynthSpec& spec) { return generate_synthetic(spec).corpus; }

}  // namespace facetag
