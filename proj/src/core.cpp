#include "facetag/core.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

namespace facetag {

const char* scale_name(Scale s) {
    switch (s) {
        case Scale::valence: return "valence";
        case Scale::arousal: return "arousal";
        case Scale::likability: return "likability";
        case Scale::rewatch: return "rewatch";
    }
    return "unknown";
}

std::optional<Scale> scale_from_name(const std::string& name) {
    for (Scale s : kScales) {
        if (name == scale_name(s)) return s;
    }
    return std::nullopt;
}

ScaleRange scale_range(Scale s) {
    switch (s) {
        case Scale::valence:
        case Scale::arousal: return {1.0, 5.0};
        case Scale::likability:
        case Scale::rewatch: return {1.0, 3.0};
    }
    return {0.0, 0.0};
}

double& AffectVector::operator[](std::size_t i) {
    switch (i) {
        case 0: return valence;
        case 1: return arousal;
        case 2: return likability;
        case 3: return rewatch;
    }
    throw InvalidArgument("AffectVector index out of range: " + std::to_string(i));
}

double AffectVector::operator[](std::size_t i) const {
    return const_cast<AffectVector&>(*this)[i];
}

bool AffectVector::finite() const {
    return std::isfinite(valence) && std::isfinite(arousal) && std::isfinite(likability) &&
           std::isfinite(rewatch);
}

Eigen::Vector4d AffectVector::to_eigen() const {
    return {valence, arousal, likability, rewatch};
}

AffectVector AffectVector::from_eigen(const Eigen::Ref<const Eigen::Vector4d>& v) {
    return {v(0), v(1), v(2), v(3)};
}

std::span<const double> AuSeries::channel(Eigen::Index c, Eigen::Index begin,
                                          Eigen::Index end) const {
    if (c < 0 || c >= values.cols() || begin < 0 || end > values.rows() || begin > end) {
        throw InvalidArgument("channel view out of range");
    }
    return {values.data() + c * values.rows() + begin, static_cast<std::size_t>(end - begin)};
}

std::optional<Eigen::Index> AuSeries::find_channel(const std::string& id) const {
    auto it = std::find(channels.begin(), channels.end(), id);
    if (it == channels.end()) return std::nullopt;
    return static_cast<Eigen::Index>(it - channels.begin());
}

bool operator==(const AuSeries& a, const AuSeries& b) {
    if (a.frame_rate != b.frame_rate || a.channels != b.channels) return false;
    if (a.values.rows() != b.values.rows() || a.values.cols() != b.values.cols()) return false;
    // Bitwise-equal finite values; NaN never compares equal, which is what we want here.
    return (a.values.array() == b.values.array()).all();
}

GestureIndices resolve_gestures(const GestureChannels& g, const AuSeries& s) {
    auto need = [&](const std::string& id, const char* role) {
        if (id.empty()) throw InvalidArgument(std::string("gesture role '") + role + "' is unmapped");
        auto idx = s.find_channel(id);
        if (!idx) {
            throw InvalidArgument(std::string("gesture role '") + role + "' maps to missing channel '" +
                                  id + "'");
        }
        return *idx;
    };
    return {need(g.smile_left, "smile_left"), need(g.smile_right, "smile_right"),
            need(g.blink, "blink"),           need(g.dimple, "dimple"),
            need(g.lip_stretch, "lip_stretch"), need(g.frown, "frown")};
}

Corpus::Corpus(std::vector<std::string> channels, GestureChannels gestures,
               std::vector<Recording> recordings, std::map<std::string, AffectVector> clip_tags,
               std::map<RecordingKey, AffectVector> reports, bool discrete_reports)
    : channels_(std::move(channels)),
      gestures_(std::move(gestures)),
      recordings_(std::move(recordings)),
      clip_tags_(std::move(clip_tags)),
      reports_(std::move(reports)),
      discrete_reports_(discrete_reports) {
    std::stable_sort(recordings_.begin(), recordings_.end(), [](const Recording& a, const Recording& b) {
        return std::tie(a.viewer_id, a.clip_id) < std::tie(b.viewer_id, b.clip_id);
    });
}

std::vector<std::string> Corpus::viewers() const {
    std::set<std::string> ids;
    for (const auto& r : recordings_) ids.insert(r.viewer_id);
    for (const auto& [key, _] : reports_) ids.insert(key.first);
    return {ids.begin(), ids.end()};
}

std::vector<std::string> Corpus::clips() const {
    std::set<std::string> ids;
    for (const auto& r : recordings_) ids.insert(r.clip_id);
    for (const auto& [clip, _] : clip_tags_) ids.insert(clip);
    return {ids.begin(), ids.end()};
}

const Recording* Corpus::find(const std::string& viewer, const std::string& clip) const {
    auto it = std::lower_bound(recordings_.begin(), recordings_.end(), std::tie(viewer, clip),
                               [](const Recording& r, const auto& key) {
                                   return std::tie(r.viewer_id, r.clip_id) < key;
                               });
    if (it == recordings_.end() || it->viewer_id != viewer || it->clip_id != clip) return nullptr;
    return &*it;
}

const AffectVector& Corpus::tag(const std::string& clip) const {
    auto it = clip_tags_.find(clip);
    if (it == clip_tags_.end()) throw InvalidArgument("no tag for clip '" + clip + "'");
    return it->second;
}

const AffectVector& Corpus::report(const std::string& viewer, const std::string& clip) const {
    auto it = reports_.find({viewer, clip});
    if (it == reports_.end()) {
        throw InvalidArgument("no report for viewer '" + viewer + "' clip '" + clip + "'");
    }
    return it->second;
}

std::vector<const Recording*> Corpus::recordings_of_viewer(const std::string& viewer) const {
    std::vector<const Recording*> out;
    for (const auto& r : recordings_) {
        if (r.viewer_id == viewer) out.push_back(&r);
    }
    return out;
}

Corpus Corpus::without_clip(const std::string& clip) const {
    Corpus c = *this;
    std::erase_if(c.recordings_, [&](const Recording& r) { return r.clip_id == clip; });
    c.clip_tags_.erase(clip);
    std::erase_if(c.reports_, [&](const auto& kv) { return kv.first.second == clip; });
    return c;
}

Corpus Corpus::without_viewer(const std::string& viewer) const {
    Corpus c = *this;
    std::erase_if(c.recordings_, [&](const Recording& r) { return r.viewer_id == viewer; });
    std::erase_if(c.reports_, [&](const auto& kv) { return kv.first.first == viewer; });
    return c;
}

namespace {

std::string recording_entity(const Recording& r) {
    return "recording viewer=" + r.viewer_id + " clip=" + r.clip_id;
}

void check_series(const Recording& r, const Corpus& corpus, std::vector<Violation>& out) {
    const auto& s = r.series;
    const std::string who = recording_entity(r);
    if (!(s.frame_rate > 0.0) || !std::isfinite(s.frame_rate)) {
        out.push_back({who, "frame_rate must be a positive real"});
    }
    if (s.frames() < 2) out.push_back({who, "series needs at least 2 frames"});
    if (static_cast<std::size_t>(s.channel_count()) != s.channels.size()) {
        out.push_back({who, "value matrix width does not match channel list"});
    }
    std::set<std::string> seen;
    for (const auto& ch : s.channels) {
        if (!seen.insert(ch).second) out.push_back({who, "duplicate channel id '" + ch + "'"});
    }
    if (s.channels != corpus.channels()) {
        out.push_back({who, "channel order differs from the corpus channel list"});
    }
    for (Eigen::Index f = 0; f < s.values.rows(); ++f) {
        for (Eigen::Index c = 0; c < s.values.cols(); ++c) {
            if (!std::isfinite(s.values(f, c))) {
                std::ostringstream rule;
                rule << "non-finite value at frame " << f << " channel "
                     << (static_cast<std::size_t>(c) < s.channels.size() ? s.channels[c] : std::to_string(c));
                out.push_back({who, rule.str()});
                return;  // one violation per series is enough to locate it
            }
        }
    }
    const auto& span = r.clip_span;
    if (span.begin < 0 || span.end > s.frames() || span.begin >= span.end) {
        out.push_back({who, "clip_span outside series bounds"});
    }
    try {
        resolve_gestures(corpus.gestures(), s);
    } catch (const InvalidArgument& e) {
        out.push_back({who, e.what()});
    }
}

void check_affect(const std::string& who, const AffectVector& v, bool discrete,
                  std::vector<Violation>& out) {
    if (!v.finite()) {
        out.push_back({who, "affect vector has non-finite component"});
        return;
    }
    if (!discrete) return;
    for (Scale s : kScales) {
        const double x = v[s];
        const auto range = scale_range(s);
        if (x != std::round(x) || x < range.lo || x > range.hi) {
            out.push_back({who, std::string(scale_name(s)) + " is not a discrete rating in range"});
        }
    }
}

}  // namespace

std::vector<Violation> validate_corpus(const Corpus& corpus) {
    std::vector<Violation> out;

    std::set<std::string> channel_ids;
    for (const auto& ch : corpus.channels()) {
        if (!channel_ids.insert(ch).second) out.push_back({"corpus", "duplicate channel id '" + ch + "'"});
    }

    std::set<RecordingKey> keys;
    for (const auto& r : corpus.recordings()) {
        if (!keys.insert({r.viewer_id, r.clip_id}).second) {
            out.push_back({recording_entity(r), "duplicate viewer/clip pair"});
        }
        check_series(r, corpus, out);
        if (!corpus.reports().contains({r.viewer_id, r.clip_id})) {
            out.push_back({recording_entity(r), "missing subjective report"});
        }
    }
    for (const auto& clip : corpus.clips()) {
        auto it = corpus.clip_tags().find(clip);
        if (it == corpus.clip_tags().end()) {
            out.push_back({"clip " + clip, "missing clip tag"});
        } else {
            check_affect("clip " + clip, it->second, false, out);
        }
    }
    for (const auto& [key, v] : corpus.reports()) {
        check_affect("report viewer=" + key.first + " clip=" + key.second, v,
                     corpus.discrete_reports(), out);
    }
    return out;
}

std::vector<Fold<std::string>> split_loo(const std::vector<std::string>& ids, const char* what) {
    if (ids.size() < 2) {
        throw InvalidArgument(std::string("leave-one-out needs at least 2 ") + what + ", got " +
                              std::to_string(ids.size()));
    }
    std::vector<Fold<std::string>> folds;
    folds.reserve(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        Fold<std::string> f;
        f.held_out = ids[i];
        for (std::size_t j = 0; j < ids.size(); ++j) {
            if (j != i) f.train.push_back(ids[j]);
        }
        folds.push_back(std::move(f));
    }
    return folds;
}

std::vector<ClipFold> split_loo_clips(const Corpus& corpus) {
    return split_loo(corpus.clips(), "clips");
}

std::vector<ViewerFold> split_loo_viewers(const Corpus& corpus) {
    return split_loo(corpus.viewers(), "viewers");
}

}  // namespace facetag
