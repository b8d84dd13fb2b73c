#include "facetag/synth.hpp"

#include "facetag/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <numeric>
#include <set>

namespace facetag {

namespace {

constexpr double kBaselineAlpha = 0.15;  // one-pole low-pass coefficient
constexpr std::size_t kMaxLevelSwitches = 40;  // even
constexpr std::size_t kMaxBlinks = 10;
constexpr std::size_t kBackgroundBlinkSlots = 4;
constexpr std::array<double, 3> kSwitchLevels = {0.4, 0.8, 1.2};

std::string padded_id(char prefix, std::size_t i, std::size_t count) {
    const int width = std::max(2, static_cast<int>(std::to_string(count).size()));
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%c%0*zu", prefix, width, i + 1);
    return buf;
}

double clamp01(double x) { return std::clamp(x, 0.0, 1.0); }

double raised_cosine(double phase) {  // phase in [0, 1)
    return 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * phase));
}

struct ChannelIndex {
    Eigen::Index blink_l, blink_r, smile_l, smile_r, dimple_l, dimple_r;
    Eigen::Index stretch_l, stretch_r, frown_l, frown_r;
    Eigen::Index brow_c, brow_l, brow_r, jaw_open, cheek_l, cheek_r;
};

Eigen::Index index_of(const std::vector<std::string>& ids, const char* id) {
    return static_cast<Eigen::Index>(std::find(ids.begin(), ids.end(), id) - ids.begin());
}

}  // namespace

const std::vector<std::string>& synthetic_channels() {
    static const std::vector<std::string> ids = {
        "EyeBlink_L",     "EyeBlink_R",     "EyeSquint_L",    "EyeSquint_R",     "EyeDown_L",
        "EyeDown_R",      "EyeIn_L",        "EyeIn_R",        "EyeOpen_L",       "EyeOpen_R",
        "EyeOut_L",       "EyeOut_R",       "EyeUp_L",        "EyeUp_R",         "BrowsD_L",
        "BrowsD_R",       "BrowsU_C",       "BrowsU_L",       "BrowsU_R",        "JawOpen",
        "JawLeft",        "JawRight",       "JawFwd",         "JawChew",         "LipsUpperUp_L",
        "LipsUpperUp_R",  "LipsLowerDown_L", "LipsLowerDown_R", "LipsUpperClose", "LipsLowerClose",
        "LipsFunnel",     "LipsPucker",     "LipsStretch_L",  "LipsStretch_R",   "MouthSmile_L",
        "MouthSmile_R",   "MouthFrown_L",   "MouthFrown_R",   "MouthDimple_L",   "MouthDimple_R",
        "MouthLeft",      "MouthRight",     "MouthPress_L",   "MouthPress_R",    "ChinLowerRaise",
        "ChinUpperRaise", "Sneer_L",        "Sneer_R",        "Puff",            "CheekSquint_L",
        "CheekSquint_R"};
    return ids;
}

GestureChannels synthetic_gestures() {
    return {"MouthSmile_L", "MouthSmile_R", "EyeBlink_L", "MouthDimple_L", "LipsStretch_L", "MouthFrown_L"};
}

void validate_synth_spec(const SynthSpec& spec) {
    if (spec.n_viewers < 2) throw InvalidArgument("synth: n_viewers must be >= 2");
    if (spec.n_clips < 2) throw InvalidArgument("synth: n_clips must be >= 2");
    if (!(spec.clip_seconds >= 8.0) || !std::isfinite(spec.clip_seconds)) {
        throw InvalidArgument("synth: clip_seconds must be >= 8");
    }
    if (!(spec.frame_rate > 0.0) || !std::isfinite(spec.frame_rate)) {
        throw InvalidArgument("synth: frame_rate must be positive");
    }
    if (std::lround(6.0 * spec.frame_rate) < 16) {
        throw InvalidArgument("synth: frame_rate too low for a resolvable 6 s burst");
    }
    if (!(spec.noise_level >= 0.0) || !std::isfinite(spec.noise_level)) {
        throw InvalidArgument("synth: noise_level must be a finite value >= 0");
    }
    for (const auto& [name, value] : spec.effect_strengths) {
        if (!scale_from_name(name)) throw InvalidArgument("synth: unknown effect scale '" + name + "'");
        if (!std::isfinite(value)) throw InvalidArgument("synth: effect strength for " + name + " is not finite");
    }
    if (!std::isfinite(spec.burst_offset_mean) || !(spec.burst_offset_sd >= 0.0)) {
        throw InvalidArgument("synth: burst offset parameters must be finite, sd >= 0");
    }
}

SynthCorpus generate_synthetic(const SynthSpec& spec) {
    validate_synth_spec(spec);
    Rng rng(spec.seed);

    auto effect = [&](Scale s) {
        auto it = spec.effect_strengths.find(scale_name(s));
        return it == spec.effect_strengths.end() ? 1.0 : it->second;
    };
    const double noise = spec.noise_level;
    const double fps = spec.frame_rate;
    const auto margin = std::lround(6.0 * fps);
    const auto clip_frames = std::lround(spec.clip_seconds * fps);
    const Eigen::Index total_frames = clip_frames + 2 * margin;
    const Eigen::Index burst_len = std::lround(6.0 * fps);
    const FrameRange clip_span{margin, margin + clip_frames};

    const auto& channels = synthetic_channels();
    const auto n_channels = static_cast<Eigen::Index>(channels.size());
    const ChannelIndex ci{index_of(channels, "EyeBlink_L"),    index_of(channels, "EyeBlink_R"),
                          index_of(channels, "MouthSmile_L"),  index_of(channels, "MouthSmile_R"),
                          index_of(channels, "MouthDimple_L"), index_of(channels, "MouthDimple_R"),
                          index_of(channels, "LipsStretch_L"), index_of(channels, "LipsStretch_R"),
                          index_of(channels, "MouthFrown_L"),  index_of(channels, "MouthFrown_R"),
                          index_of(channels, "BrowsU_C"),      index_of(channels, "BrowsU_L"),
                          index_of(channels, "BrowsU_R"),      index_of(channels, "JawOpen"),
                          index_of(channels, "CheekSquint_L"), index_of(channels, "CheekSquint_R")};

    const std::array<Eigen::Index, 5> coactivation_sources = {ci.smile_l, ci.stretch_l, ci.brow_c, ci.dimple_l,
                                                              ci.blink_l};
    std::vector<Eigen::Index> coactive;
    {
        const std::set<Eigen::Index> planted = {ci.blink_l,   ci.blink_r,   ci.smile_l, ci.smile_r,  ci.dimple_l,
                                                ci.dimple_r,  ci.stretch_l, ci.stretch_r, ci.frown_l, ci.frown_r,
                                                ci.brow_c,    ci.brow_l,    ci.brow_r,  ci.jaw_open, ci.cheek_l,
                                                ci.cheek_r};
        for (Eigen::Index c = 0; c < n_channels; ++c) {
            if (!planted.contains(c)) coactive.push_back(c);
        }
    }

    std::vector<std::string> clip_ids, viewer_ids;
    for (std::size_t k = 0; k < spec.n_clips; ++k) clip_ids.push_back(padded_id('c', k, spec.n_clips));
    for (std::size_t i = 0; i < spec.n_viewers; ++i) viewer_ids.push_back(padded_id('v', i, spec.n_viewers));

    // 1. clip tags
    std::map<std::string, AffectVector> tags;
    std::vector<AffectVector> unit_tags(spec.n_clips);
    for (std::size_t k = 0; k < spec.n_clips; ++k) {
        AffectVector t;
        for (Scale s : kScales) {
            const double u = rng.uniform();
            const auto r = scale_range(s);
            unit_tags[k][s] = u;
            t[s] = r.lo + (r.hi - r.lo) * u;
        }
        tags[clip_ids[k]] = t;
    }

    // 2. per-clip burst offsets, standardized so the corpus mirrors the target mean/sd
    std::vector<double> z(spec.n_clips);
    for (auto& v : z) v = rng.normal();
    {
        const double m = std::accumulate(z.begin(), z.end(), 0.0) / static_cast<double>(z.size());
        double var = 0.0;
        for (double v : z) var += (v - m) * (v - m);
        const double sd = std::sqrt(var / static_cast<double>(z.size()));
        for (auto& v : z) v = sd > 0.0 ? (v - m) / sd : 0.0;
    }
    std::vector<double> clip_offset(spec.n_clips);
    for (std::size_t k = 0; k < spec.n_clips; ++k) {
        clip_offset[k] = std::clamp(spec.burst_offset_mean + spec.burst_offset_sd * z[k], -spec.clip_seconds, 0.0);
    }

    // Smile counts follow the likability rank so counts are strictly ordered by tag.
    std::vector<std::size_t> like_rank(spec.n_clips);
    {
        std::vector<std::size_t> order(spec.n_clips);
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return unit_tags[a].likability < unit_tags[b].likability;
        });
        for (std::size_t r = 0; r < order.size(); ++r) like_rank[order[r]] = r;
    }
    const auto max_smiles = std::max<std::size_t>(1, static_cast<std::size_t>(burst_len / 8));
    const double e_like = std::max(0.0, effect(Scale::likability));
    double rank_step = e_like;
    if (e_like > 0.0 && e_like * static_cast<double>(spec.n_clips - 1) + 1.0 > static_cast<double>(max_smiles)) {
        rank_step = static_cast<double>(max_smiles - 1) / static_cast<double>(spec.n_clips - 1);
    }

    const double blink_width = std::max(3.0, std::round(0.2 * fps));
    const double baseline_sd = 0.02 * (1.0 + noise);
    const double drive = std::sqrt((2.0 - kBaselineAlpha) / kBaselineAlpha) * baseline_sd;

    std::vector<Recording> recordings;
    std::map<RecordingKey, AffectVector> reports;
    std::vector<PlantedBurst> bursts;
    recordings.reserve(spec.n_viewers * spec.n_clips);

    // 3. viewers
    for (std::size_t i = 0; i < spec.n_viewers; ++i) {
        const double gain = std::clamp(1.0 + 0.1 * noise * rng.normal(), 0.85, 1.15);
        for (std::size_t k = 0; k < spec.n_clips; ++k) {
            const AffectVector& tag = tags[clip_ids[k]];
            const AffectVector& u = unit_tags[k];

            AffectVector report;
            for (Scale s : kScales) {
                const auto r = scale_range(s);
                double v = tag[s] + noise * 0.5 * (r.hi - r.lo) * rng.normal();
                v = std::clamp(v, r.lo, r.hi);
                if (spec.discrete_reports) v = std::round(v);
                report[s] = v;
            }
            reports[{viewer_ids[i], clip_ids[k]}] = report;

            std::array<double, 8> jitter{};
            for (auto& j : jitter) j = rng.normal();
            std::array<double, kBackgroundBlinkSlots> bg_pos{};
            for (auto& p : bg_pos) p = rng.uniform();
            const double first_level_u = rng.uniform();
            std::array<double, kMaxLevelSwitches + 1> level_u{};
            for (auto& l : level_u) l = rng.uniform();

            PlantedBurst burst;
            burst.viewer_id = viewer_ids[i];
            burst.clip_id = clip_ids[k];
            burst.length_frames = burst_len;
            const double offset_s = clip_offset[k] + 0.3 * noise * jitter[0];
            burst.start_frame = std::clamp<Eigen::Index>(clip_span.end + std::lround(offset_s * fps),
                                                         clip_span.begin, clip_span.end);
            const Eigen::Index s0 = burst.start_frame;

            const double smile_amp =
                (1.0 + 0.5 * clamp01(effect(Scale::valence) * u.valence)) * gain * (1.0 + 0.08 * noise * jitter[1]);
            const auto planted_smiles =
                1 + static_cast<long>(std::floor(rank_step * static_cast<double>(like_rank[k]) + 1e-9));
            burst.smiles = static_cast<std::size_t>(std::clamp<long>(
                planted_smiles + std::lround(0.8 * noise * jitter[2]), 1, static_cast<long>(max_smiles)));
            burst.blinks = static_cast<std::size_t>(std::clamp<long>(
                1 + std::lround(6.0 * clamp01(effect(Scale::rewatch) * u.rewatch)) + std::lround(0.8 * noise * jitter[3]),
                1, static_cast<long>(kMaxBlinks)));
            const double rate =
                (0.5 + 4.5 * clamp01(effect(Scale::arousal) * u.arousal)) * std::exp(0.25 * noise * jitter[4]);
            burst.level_switches = 2 * static_cast<std::size_t>(
                std::clamp<long>(std::lround(3.0 * rate), 1, static_cast<long>(kMaxLevelSwitches / 2)));
            const double dimple_amp =
                (0.1 + 0.9 * clamp01(effect(Scale::valence) * u.valence)) * gain * (1.0 + 0.1 * noise * jitter[5]);
            const double cheek_amp = 0.8 * clamp01(effect(Scale::valence) * u.valence) * gain * (1.0 + 0.1 * noise * jitter[5]);
            const double blink_amp = 0.5 * (1.0 + 0.05 * noise * jitter[6]);
            burst.background_blinks = static_cast<std::size_t>(
                std::clamp<long>(std::lround(noise * (1.0 + jitter[7])), 0, static_cast<long>(kBackgroundBlinkSlots)));

            Eigen::MatrixXd values(total_frames, n_channels);

            // Baseline: per-channel level plus low-pass filtered white noise.
            std::vector<double> levels(static_cast<std::size_t>(n_channels));
            for (auto& l : levels) l = rng.uniform(0.0, 0.1);
            for (Eigen::Index c = 0; c < n_channels; ++c) {
                double y = baseline_sd * rng.normal();
                values(0, c) = levels[static_cast<std::size_t>(c)] + y;
                for (Eigen::Index t = 1; t < total_frames; ++t) {
                    y = (1.0 - kBaselineAlpha) * y + kBaselineAlpha * drive * rng.normal();
                    values(t, c) = levels[static_cast<std::size_t>(c)] + y;
                }
            }

            // Level-switching sequence: pieces of equal length, every
            // boundary changes the level. Brow/jaw channels alternate between
            // rest and an active level (both end pieces active); lip stretch
            // and frown hold one active level per piece.
            const std::size_t pieces = burst.level_switches + 1;
            std::vector<double> active_level(pieces), brow_level(pieces);
            std::size_t level_idx = static_cast<std::size_t>(first_level_u * 3.0) % 3;
            for (std::size_t p = 0; p < pieces; ++p) {
                if (p > 0) level_idx = (level_idx + 1 + static_cast<std::size_t>(level_u[p] * 2.0) % 2) % 3;
                active_level[p] = kSwitchLevels[level_idx];
                brow_level[p] = p % 2 == 1 ? 0.0 : kSwitchLevels[static_cast<std::size_t>(level_u[p] * 3.0) % 3];
            }
            auto smoothed_pieces = [&](const std::vector<double>& level) {
                std::vector<double> raw(static_cast<std::size_t>(burst_len));
                for (Eigen::Index t = 0; t < burst_len; ++t) {
                    const auto p = static_cast<std::size_t>(t * static_cast<Eigen::Index>(pieces) / burst_len);
                    raw[static_cast<std::size_t>(t)] = level[p] * gain;
                }
                std::vector<double> out(raw.size());
                for (std::size_t t = 0; t < raw.size(); ++t) {
                    double sum = raw[t];
                    int n = 1;
                    if (t > 0) sum += raw[t - 1], ++n;
                    if (t + 1 < raw.size()) sum += raw[t + 1], ++n;
                    out[t] = sum / n;
                }
                return out;
            };
            const std::vector<double> lip_switching = smoothed_pieces(active_level);
            const std::vector<double> brow_switching = smoothed_pieces(brow_level);

            // Dimples and lip stretch/frown ride a shared onset/offset
            // envelope: a half raised cosine decaying over the first quarter
            // of the burst and its mirror rising over the last quarter.
            // Active burst edges keep the mean+variance window score on the
            // burst itself rather than straddling one of its edges. Smiles are
            // independent bumps, each filling the middle half of its period.
            // Cheek raise follows valence with one smooth bump over the burst.
            const auto n_smiles = static_cast<double>(burst.smiles);
            auto phase_at = [&](double periods, Eigen::Index t) {
                const double x = (static_cast<double>(t) + 0.5) * periods / static_cast<double>(burst_len);
                return x - std::floor(x);
            };
            for (Eigen::Index t = 0; t < burst_len; ++t) {
                const Eigen::Index f = s0 + t;
                const auto ts = static_cast<std::size_t>(t);
                const double sp = phase_at(n_smiles, t);
                const double smile = sp >= 0.25 && sp < 0.75 ? smile_amp * raised_cosine(2.0 * (sp - 0.25)) : 0.0;
                values(f, ci.smile_l) += smile;
                values(f, ci.smile_r) += 0.95 * smile;
                const double cp = phase_at(1.0, t);
                const double carrier = cp < 0.25 || cp >= 0.75 ? raised_cosine(2.0 * std::fmod(cp + 0.25, 1.0)) : 0.0;
                values(f, ci.dimple_l) += dimple_amp * carrier;
                values(f, ci.dimple_r) += 0.9 * dimple_amp * carrier;
                const double lip = carrier * lip_switching[ts];
                values(f, ci.stretch_l) += lip;
                values(f, ci.stretch_r) += 0.95 * lip;
                values(f, ci.frown_l) += 0.8 * lip;
                values(f, ci.frown_r) += 0.75 * lip;
                const double brow = brow_switching[ts];
                values(f, ci.brow_c) += brow;
                values(f, ci.brow_l) += 0.9 * brow;
                values(f, ci.brow_r) += 0.9 * brow;
                values(f, ci.jaw_open) += 0.6 * brow;
                const double cheek = cheek_amp * raised_cosine((static_cast<double>(t) + 0.5) / static_cast<double>(burst_len));
                values(f, ci.cheek_l) += cheek;
                values(f, ci.cheek_r) += 0.95 * cheek;
            }

            auto add_blink = [&](double center) {
                const auto lo = static_cast<Eigen::Index>(std::ceil(center - blink_width / 2.0));
                const auto hi = static_cast<Eigen::Index>(std::floor(center + blink_width / 2.0));
                for (Eigen::Index f = std::max<Eigen::Index>(0, lo); f <= std::min(total_frames - 1, hi); ++f) {
                    const double phase = (static_cast<double>(f) - center) / blink_width + 0.5;
                    if (phase <= 0.0 || phase >= 1.0) continue;
                    values(f, ci.blink_l) += blink_amp * raised_cosine(phase);
                    values(f, ci.blink_r) += 0.97 * blink_amp * raised_cosine(phase);
                }
            };
            for (std::size_t b = 0; b < burst.blinks; ++b) {
                add_blink(static_cast<double>(s0) + (static_cast<double>(b) + 0.5) * static_cast<double>(burst_len) /
                                                        static_cast<double>(burst.blinks));
            }
            // Background blinks keep at least one second away from the burst.
            const double guard = fps;
            const double excl_lo = std::max(0.0, static_cast<double>(s0) - guard);
            const double excl_hi = std::min(static_cast<double>(total_frames), static_cast<double>(s0 + burst_len) + guard);
            const double usable_lo = blink_width;
            const double usable_hi = static_cast<double>(total_frames) - blink_width;
            const double left_len = std::max(0.0, excl_lo - usable_lo);
            const double right_len = std::max(0.0, usable_hi - excl_hi);
            for (std::size_t b = 0; b < burst.background_blinks && left_len + right_len > 0.0; ++b) {
                const double x = bg_pos[b] * (left_len + right_len);
                add_blink(x < left_len ? usable_lo + x : excl_hi + (x - left_len));
            }

            // Every channel without a gesture role co-activates with one of
            // the planted sources during the burst, as neighbouring facial
            // muscles do. Sources cycle in channel order with weights
            // 1, 1.1, 1.2; the copy excludes the source's resting level.
            for (std::size_t j = 0; j < coactive.size(); ++j) {
                const Eigen::Index src = coactivation_sources[j % coactivation_sources.size()];
                const double w = 1.0 + 0.1 * static_cast<double>(j % 3);
                const double rest = levels[static_cast<std::size_t>(src)];
                for (Eigen::Index f = s0; f < s0 + burst_len; ++f) {
                    values(f, coactive[j]) += w * (values(f, src) - rest);
                }
            }

            Recording rec;
            rec.viewer_id = viewer_ids[i];
            rec.clip_id = clip_ids[k];
            rec.series.frame_rate = fps;
            rec.series.channels = channels;
            rec.series.values = std::move(values);
            rec.clip_span = clip_span;
            recordings.push_back(std::move(rec));
            bursts.push_back(std::move(burst));
        }
    }

    SynthCorpus out;
    out.corpus = Corpus(channels, synthetic_gestures(), std::move(recordings), std::move(tags),
                        std::move(reports), spec.discrete_reports);
    out.bursts = std::move(bursts);
    out.clip_burst_offset = std::move(clip_offset);
    return out;
}

}  // namespace facetag
