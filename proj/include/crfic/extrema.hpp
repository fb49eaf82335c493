#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <ostream>
#include <vector>

#include "crfic/common.hpp"
#include "crfic/path.hpp"

namespace crfic {

enum class ExtremumKind { minimum = -1, maximum = +1 };
enum class StopDirection { up, down };

enum class ScanStatus {
    ok,
    window_too_short,    // no stop time inside the window
    no_confirmed_events, // a stop exists but no completed stretch
};

struct ExtremaEvent {
    std::size_t index = 0; // grid index in the scanned path
    double time = 0.0;
    double value = 0.0;
    ExtremumKind kind = ExtremumKind::maximum;
    bool provisional = false;
};

struct StopTime {
    double time = 0.0;
    std::size_t index = 0;
    StopDirection direction = StopDirection::up;
};

// Extremum candidate adjacent to the scan origin: the argext over
// [origin, first stop]. It anchors the first stretch but its far side is
// untestified, so it is kept out of the event list (except when it is all the
// scan found) and consumed by the bilateral matching rule instead.
struct OriginCandidate {
    bool found = false;
    std::size_t index = 0;
    double time = 0.0;
    double value = 0.0;
    ExtremumKind kind = ExtremumKind::maximum;
};

struct ExtremaSequence {
    double gamma = 0.0;
    std::vector<ExtremaEvent> events;
    std::vector<StopTime> stop_times;
    ScanStatus status = ScanStatus::ok;
    OriginCandidate origin_candidate;
};

namespace detail {

inline ExtremaEvent make_event(const SampledPath& p, std::size_t idx,
                               ExtremumKind kind, bool provisional) {
    return ExtremaEvent{idx, p.time(idx), p.values[idx], kind, provisional};
}

} // namespace detail

// Streaming scan for gamma-sized alternations, walking the path left to
// right from values[0]. State is O(1): the running extremum of the current
// stretch plus phase bookkeeping.
//
// Emission rules:
//   - A stop is recorded the first time the running rise (or drop) strictly
//     exceeds gamma. Stops alternate by construction.
//   - Every stop after the first closes a stretch and emits its argext (ties
//     resolved to the earliest index). The first emitted event is flagged
//     provisional: its left flank leans on the scan origin's unknown
//     pre-history.
//   - The candidate running when the window ends is emitted provisional only
//     if its stretch extends past the last stop and at least one stretch
//     event exists.
//   - If exactly one stop fits in the window, the origin-adjacent candidate
//     is emitted provisional (there is nothing else to report) and the status
//     is no_confirmed_events. No stop at all yields window_too_short.
inline ExtremaSequence forward_neveu_pitman(const SampledPath& p, double gamma) {
    require(gamma > 0.0 && std::isfinite(gamma), "forward_neveu_pitman: gamma must be positive");
    require(!p.values.empty(), "forward_neveu_pitman: empty path");

    ExtremaSequence seq;
    seq.gamma = gamma;

    const std::size_t n = p.values.size();
    // Phase 0: direction unknown, track both running extrema.
    double lo = p.values[0], hi = p.values[0];
    std::size_t ilo = 0, ihi = 0;

    std::size_t k = 1;
    bool tracking_max = false; // valid after the first stop
    double cand = 0.0;
    std::size_t icand = 0;

    for (; k < n; ++k) {
        const double x = p.values[k];
        if (x < lo) { lo = x; ilo = k; }
        if (x > hi) { hi = x; ihi = k; }
        const bool up = (x - lo) > gamma;
        const bool down = (hi - x) > gamma;
        if (!up && !down) continue;
        // First stop: lock direction. A simultaneous double trigger needs a
        // single increment larger than 2*gamma; break the tie by the larger
        // exceedance.
        const bool is_up = up && (!down || (x - lo) >= (hi - x));
        seq.stop_times.push_back({p.time(k), k, is_up ? StopDirection::up : StopDirection::down});
        if (is_up) {
            seq.origin_candidate = {true, ilo, p.time(ilo), lo, ExtremumKind::minimum};
            tracking_max = true;
        } else {
            seq.origin_candidate = {true, ihi, p.time(ihi), hi, ExtremumKind::maximum};
            tracking_max = false;
        }
        cand = x;
        icand = k;
        ++k;
        break;
    }

    if (seq.stop_times.empty()) {
        seq.status = ScanStatus::window_too_short;
        return seq;
    }

    for (; k < n; ++k) {
        const double x = p.values[k];
        if (tracking_max) {
            if (x > cand) { cand = x; icand = k; }
            if (cand - x > gamma) {
                seq.events.push_back(detail::make_event(p, icand, ExtremumKind::maximum,
                                                        seq.events.empty()));
                seq.stop_times.push_back({p.time(k), k, StopDirection::down});
                tracking_max = false;
                cand = x;
                icand = k;
            }
        } else {
            if (x < cand) { cand = x; icand = k; }
            if (x - cand > gamma) {
                seq.events.push_back(detail::make_event(p, icand, ExtremumKind::minimum,
                                                        seq.events.empty()));
                seq.stop_times.push_back({p.time(k), k, StopDirection::up});
                tracking_max = true;
                cand = x;
                icand = k;
            }
        }
    }

    if (seq.events.empty()) {
        const auto& oc = seq.origin_candidate;
        seq.events.push_back(detail::make_event(p, oc.index, oc.kind, true));
        seq.status = ScanStatus::no_confirmed_events;
        return seq;
    }

    // Trailing running candidate, if its stretch reaches past the last stop.
    if (seq.stop_times.back().index + 1 < n) {
        seq.events.push_back(detail::make_event(
            p, icand, tracking_max ? ExtremumKind::maximum : ExtremumKind::minimum, true));
    }
    return seq;
}

namespace detail {

// Map an event list produced on reverse(p) back onto p.
inline ExtremaSequence mirror_sequence(const ExtremaSequence& rs, const SampledPath& p) {
    const std::size_t n = p.values.size();
    ExtremaSequence out;
    out.gamma = rs.gamma;
    out.status = rs.status;
    auto flip_idx = [n](std::size_t i) { return n - 1 - i; };
    out.events.reserve(rs.events.size());
    for (auto it = rs.events.rbegin(); it != rs.events.rend(); ++it) {
        ExtremaEvent e = *it;
        e.index = flip_idx(e.index);
        e.time = p.time(e.index);
        out.events.push_back(e);
    }
    out.stop_times.reserve(rs.stop_times.size());
    for (auto it = rs.stop_times.rbegin(); it != rs.stop_times.rend(); ++it) {
        StopTime s = *it;
        s.index = flip_idx(s.index);
        s.time = p.time(s.index);
        out.stop_times.push_back(s);
    }
    if (rs.origin_candidate.found) {
        OriginCandidate oc = rs.origin_candidate;
        oc.index = flip_idx(oc.index);
        oc.time = p.time(oc.index);
        out.origin_candidate = oc;
    }
    return out;
}

} // namespace detail

// Right-to-left scan: forward scan of the reversed path, mirrored back.
// Event kinds are preserved (a maximum stays a maximum); the event nearest
// the scan origin (the window's right end) carries the provisional flag.
inline ExtremaSequence backward_neveu_pitman(const SampledPath& p, double gamma) {
    return detail::mirror_sequence(forward_neveu_pitman(reverse(p), gamma), p);
}

// Exhaustive testifying-pair check, the oracle the scanners are measured
// against. A grid point u is a gamma-maximum when some window pair a < u < b
// exists with B_u = max over [a,b] and both B_a, B_b < B_u - gamma; minima
// are symmetric. Only points testified inside the window qualify, so events
// whose evidence would lie outside the window are absent by construction.
inline ExtremaSequence brute_force_extrema(const SampledPath& p, double gamma) {
    require(gamma > 0.0 && std::isfinite(gamma), "brute_force_extrema: gamma must be positive");
    ExtremaSequence seq;
    seq.gamma = gamma;
    std::vector<ExtremaEvent>& out = seq.events;
    const std::size_t n = p.values.size();
    if (n < 3) return seq;
    const double* v = p.values.data();

    for (std::size_t u = 1; u + 1 < n; ++u) {
        const double x = v[u];
        // gamma-maximum test: walk out while the path stays at or below x;
        // succeed on the first point strictly below x - gamma.
        bool left = false, right = false;
        for (std::size_t j = u; j-- > 0;) {
            if (v[j] > x) break;
            if (v[j] < x - gamma) { left = true; break; }
        }
        if (left) {
            for (std::size_t j = u + 1; j < n; ++j) {
                if (v[j] > x) break;
                if (v[j] < x - gamma) { right = true; break; }
            }
            if (right) {
                out.push_back(detail::make_event(p, u, ExtremumKind::maximum, false));
                continue;
            }
        }
        // gamma-minimum test, mirrored.
        left = right = false;
        for (std::size_t j = u; j-- > 0;) {
            if (v[j] < x) break;
            if (v[j] > x + gamma) { left = true; break; }
        }
        if (!left) continue;
        for (std::size_t j = u + 1; j < n; ++j) {
            if (v[j] < x) break;
            if (v[j] > x + gamma) { right = true; break; }
        }
        if (right) out.push_back(detail::make_event(p, u, ExtremumKind::minimum, false));
    }
    if (out.empty()) seq.status = ScanStatus::no_confirmed_events;
    return seq;
}

// Outcome of matching the two origin-adjacent candidates across t = 0.
struct BilateralOrigin {
    int label = 0;            // spin label at the origin: -1, 0, +1
    bool degenerate = false;  // grid tie (exact equality in a comparison)
    bool u_kept = false;      // right candidate survived as a true extremum
    bool v_kept = false;      // left candidate survived
    OriginCandidate u;        // right-side candidate (forward scan)
    OriginCandidate v;        // left-side candidate (backward scan)
};

struct BilateralResult {
    ExtremaSequence sequence; // merged, indices on the input path
    BilateralOrigin origin;
    ScanStatus status = ScanStatus::ok; // window_too_short: enlarge and retry
};

namespace detail {

inline SampledPath subpath(const SampledPath& p, std::size_t from, std::size_t to) {
    SampledPath s;
    s.t0 = p.time(from);
    s.dt = p.dt;
    s.alpha = p.alpha;
    s.scale = p.scale;
    s.values.assign(p.values.begin() + static_cast<std::ptrdiff_t>(from),
                    p.values.begin() + static_cast<std::ptrdiff_t>(to) + 1);
    return s;
}

} // namespace detail

// Scan both directions away from the grid origin, then resolve the two
// origin-adjacent candidates u (right) and v (left):
//
//   - same kind: the more extreme of the two is the true extremum and the
//     origin label is the sign of B_u - B_v;
//   - opposite kinds with |B_u - B_v| > gamma: both are true extrema and the
//     label is the right candidate's sign;
//   - opposite kinds with |B_u - B_v| <= gamma: neither is a true extremum
//     and the label is the opposite of the right candidate's sign.
//
// Exact ties (equal values, or a gap of exactly gamma) are grid artifacts:
// the label is still reported (0 for an equal-value tie) with `degenerate`
// set. If either one-sided scan finds no stop, status = window_too_short and
// the caller should enlarge the window.
inline BilateralResult bilateral_extrema(const SampledPath& p, double gamma) {
    require(!p.values.empty(), "bilateral_extrema: empty path");
    const std::size_t k0 = detail::origin_index(p.t0, p.dt, p.values.size());
    require(k0 > 0 && k0 + 1 < p.values.size(),
            "bilateral_extrema: window must surround the origin");

    BilateralResult res;
    res.sequence.gamma = gamma;

    const SampledPath right = detail::subpath(p, k0, p.values.size() - 1);
    const SampledPath left = detail::subpath(p, 0, k0);
    ExtremaSequence fwd = forward_neveu_pitman(right, gamma);
    ExtremaSequence bwd = backward_neveu_pitman(left, gamma);

    if (!fwd.origin_candidate.found || !bwd.origin_candidate.found) {
        res.status = ScanStatus::window_too_short;
        res.sequence.status = ScanStatus::window_too_short;
        return res;
    }

    // Map one-sided results onto the full-path indexing.
    auto remap_fwd = [&](std::size_t i) { return i + k0; };
    auto remap_bwd = [&](std::size_t i) { return i; };

    BilateralOrigin& og = res.origin;
    og.u = fwd.origin_candidate;
    og.u.index = remap_fwd(og.u.index);
    og.v = bwd.origin_candidate;
    og.v.index = remap_bwd(og.v.index);

    const int a1 = og.u.kind == ExtremumKind::maximum ? +1 : -1;
    const int a1p = og.v.kind == ExtremumKind::maximum ? +1 : -1;
    const double gap = og.u.value - og.v.value;

    if (a1 == a1p) {
        // The more extreme of the two wins: the higher of two maxima, the
        // lower of two minima. The origin label is the sign of B_u - B_v in
        // both kinds.
        og.label = gap > 0.0 ? +1 : (gap < 0.0 ? -1 : 0);
        if (gap != 0.0) {
            const bool u_wins = (a1 == +1) == (gap > 0.0);
            og.u_kept = u_wins;
            og.v_kept = !u_wins;
        } else {
            og.degenerate = true;
            og.u_kept = og.u.index == og.v.index; // the shared origin point
        }
    } else {
        if (std::abs(gap) > gamma) {
            og.label = a1;
            og.u_kept = og.v_kept = true;
        } else {
            og.label = -a1;
            if (std::abs(gap) == gamma) og.degenerate = true;
        }
    }

    auto& ev = res.sequence.events;
    const bool bwd_no_confirmed = bwd.status == ScanStatus::no_confirmed_events;
    const bool fwd_no_confirmed = fwd.status == ScanStatus::no_confirmed_events;
    for (const auto& e : bwd.events) {
        // Skip a fallback origin-candidate emission; og.v carries it.
        if (bwd_no_confirmed) break;
        ExtremaEvent m = e;
        m.index = remap_bwd(m.index);
        ev.push_back(m);
    }
    // Within the bilateral window the doubt about each scan's first stretch
    // event is resolved by the match, so only window-edge trailing candidates
    // keep their provisional flag.
    if (!ev.empty()) ev.back().provisional = false;

    if (og.v_kept && !(og.u_kept && og.u.index == og.v.index))
        ev.push_back(ExtremaEvent{og.v.index, og.v.time, og.v.value, og.v.kind, false});
    if (og.u_kept)
        ev.push_back(ExtremaEvent{og.u.index, og.u.time, og.u.value, og.u.kind, false});

    const std::size_t first_fwd = ev.size();
    for (const auto& e : fwd.events) {
        if (fwd_no_confirmed) break;
        ExtremaEvent m = e;
        m.index = remap_fwd(m.index);
        ev.push_back(m);
    }
    if (first_fwd < ev.size()) ev[first_fwd].provisional = false;

    for (const auto& s : bwd.stop_times) {
        StopTime t = s;
        t.index = remap_bwd(t.index);
        res.sequence.stop_times.push_back(t);
    }
    for (const auto& s : fwd.stop_times) {
        StopTime t = s;
        t.index = remap_fwd(t.index);
        res.sequence.stop_times.push_back(t);
    }
    return res;
}

struct FisherTrajectory {
    double gamma = 0.0;
    std::vector<double> breakpoints; // event times, increasing
    std::vector<int> labels;         // breakpoints.size() + 1 entries, each +-1
    int origin_label = 0;            // -1, 0, +1
};

// Piecewise-constant spin labels between consecutive events: +1 on the
// interval left of a maximum, -1 on the interval right of it (minima
// symmetric). The label at the origin is the label of the interval
// containing t = 0, or the explicitly resolved value for bilateral input.
// Label lookup. Breakpoints themselves carry the neutral label 0; between
// breakpoints the label is the one stored for that open interval.
inline int fisher_label_at(const FisherTrajectory& f, double t) {
    require(!f.labels.empty(), "fisher_label_at: empty trajectory");
    auto it = std::lower_bound(f.breakpoints.begin(), f.breakpoints.end(), t);
    if (it != f.breakpoints.end() && *it == t) return 0;
    return f.labels[static_cast<std::size_t>(it - f.breakpoints.begin())];
}

inline FisherTrajectory fisher_trajectory(const ExtremaSequence& seq) {
    bool any_confirmed = false;
    for (const auto& e : seq.events) any_confirmed |= !e.provisional;
    if (!any_confirmed)
        throw invalid_argument_error("fisher_trajectory: no confirmed extrema");
    FisherTrajectory f;
    f.gamma = seq.gamma;
    const auto& ev = seq.events;
    f.breakpoints.reserve(ev.size());
    for (const auto& e : ev) f.breakpoints.push_back(e.time);
    f.labels.reserve(ev.size() + 1);
    for (const auto& e : ev)
        f.labels.push_back(e.kind == ExtremumKind::maximum ? +1 : -1);
    f.labels.push_back(ev.back().kind == ExtremumKind::maximum ? -1 : +1);
    f.origin_label = fisher_label_at(f, 0.0);
    return f;
}

inline FisherTrajectory fisher_trajectory(const BilateralResult& bl) {
    FisherTrajectory f = fisher_trajectory(bl.sequence);
    f.origin_label = bl.origin.label;
    return f;
}

// CSV: header "index,time,value,kind,provisional".
inline void write_csv(const std::vector<ExtremaEvent>& events, std::ostream& os) {
    os << "index,time,value,kind,provisional\n";
    char buf[96];
    for (const auto& e : events) {
        std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%s,%d\n", e.index, e.time,
                      e.value, e.kind == ExtremumKind::maximum ? "max" : "min",
                      e.provisional ? 1 : 0);
        os << buf;
    }
}

} // namespace crfic
