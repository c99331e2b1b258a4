#include "stellar/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "stellar/rng.hpp"
#include "stellar/textio.hpp"

namespace stellar {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error(msg); }

bool is_hex(char c) {
    return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f') || (c >= 'A' && c <= 'F');
}

// AP column names: MAC-like "xx:xx[:xx...]" hex octet groups, or the
// WAP/AP prefix convention used by public fingerprint datasets.
bool is_ap_column(std::string_view name) {
    if (name.size() >= 5 && name.find(':') != std::string_view::npos) {
        std::size_t i = 0;
        int octets = 0;
        while (i < name.size()) {
            if (i + 2 > name.size() || !is_hex(name[i]) || !is_hex(name[i + 1])) return false;
            i += 2;
            ++octets;
            if (i == name.size()) break;
            if (name[i] != ':') return false;
            ++i;
        }
        return octets >= 2;
    }
    auto has_prefix = [&](std::string_view p) {
        if (name.size() <= p.size()) return false;
        for (std::size_t i = 0; i < p.size(); ++i) {
            if (std::tolower(static_cast<unsigned char>(name[i])) != p[i]) return false;
        }
        return true;
    };
    if (has_prefix("wap") || has_prefix("ap")) {
        std::size_t start = has_prefix("wap") ? 3 : 2;
        for (std::size_t i = start; i < name.size(); ++i) {
            char c = name[i];
            if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '-' && c != ':')
                return false;
        }
        return true;
    }
    return false;
}

const char* kHeaderPrefix[5] = {"device", "ci", "rp_id", "x", "y"};

}  // namespace

int FingerprintDataset::rp_index(std::string_view rp_id) const {
    for (std::size_t i = 0; i < rps.size(); ++i) {
        if (rps[i].rp_id == rp_id) return static_cast<int>(i);
    }
    return -1;
}

const ReferencePoint& FingerprintDataset::rp(std::string_view rp_id) const {
    int i = rp_index(rp_id);
    if (i < 0) fail("unknown reference point '" + std::string(rp_id) + "'");
    return rps[static_cast<std::size_t>(i)];
}

std::vector<std::string> FingerprintDataset::device_ids() const {
    std::set<std::string> s;
    for (const auto& r : records) s.insert(r.device_id);
    return {s.begin(), s.end()};
}

std::vector<int> FingerprintDataset::cis() const {
    std::set<int> s;
    for (const auto& r : records) s.insert(r.ci);
    return {s.begin(), s.end()};
}

FingerprintDataset FingerprintDataset::slice(std::string_view device_id, int ci) const {
    FingerprintDataset out;
    out.building_id = building_id;
    out.ap_universe = ap_universe;
    out.rps = rps;
    for (const auto& r : records) {
        if (r.device_id == device_id && r.ci == ci) out.records.push_back(r);
    }
    return out;
}

void FingerprintDataset::validate() const {
    std::set<std::string_view> seen_aps;
    for (const auto& ap : ap_universe) {
        if (!seen_aps.insert(ap).second) fail("duplicate AP '" + ap + "' in universe");
    }
    std::set<std::string_view> seen_rps;
    for (const auto& p : rps) {
        if (!seen_rps.insert(p.rp_id).second) fail("duplicate RP '" + p.rp_id + "'");
        if (!std::isfinite(p.x) || !std::isfinite(p.y))
            fail("non-finite coordinates for RP '" + p.rp_id + "'");
    }
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& r = records[i];
        if (r.ap_values.size() != ap_universe.size())
            fail("record " + std::to_string(i) + " has " + std::to_string(r.ap_values.size()) +
                 " values, universe has " + std::to_string(ap_universe.size()));
        if (seen_rps.find(r.rp_id) == seen_rps.end())
            fail("record " + std::to_string(i) + " references unknown RP '" + r.rp_id + "'");
        if (r.ci < 0) fail("record " + std::to_string(i) + " has negative CI");
    }
}

int NormalizedDataset::rp_index(std::string_view rp_id) const {
    for (std::size_t i = 0; i < rps.size(); ++i) {
        if (rps[i].rp_id == rp_id) return static_cast<int>(i);
    }
    return -1;
}

double normalize_rss(double dbm) {
    double v = std::clamp(dbm, kInvisibleRssDbm, kMaxRssDbm);
    return (v + 100.0) / 100.0;
}

double denormalize_rss(double value) {
    double v = std::clamp(value, 0.0, 1.0);
    return v * 100.0 - 100.0;
}

NormalizedFingerprint normalize(const Fingerprint& f) {
    NormalizedFingerprint out;
    out.rp_id = f.rp_id;
    out.device_id = f.device_id;
    out.ci = f.ci;
    out.values.resize(f.ap_values.size());
    for (std::size_t i = 0; i < f.ap_values.size(); ++i) {
        if (!std::isfinite(f.ap_values[i]))
            fail("non-finite RSS at AP index " + std::to_string(i));
        out.values[i] = normalize_rss(f.ap_values[i]);
    }
    return out;
}

NormalizedDataset normalize(const FingerprintDataset& ds) {
    NormalizedDataset out;
    out.building_id = ds.building_id;
    out.ap_universe = ds.ap_universe;
    out.rps = ds.rps;
    out.records.reserve(ds.records.size());
    for (const auto& r : ds.records) out.records.push_back(normalize(r));
    return out;
}

AlignResult align(const std::map<std::string, double>& scan,
                  const std::vector<std::string>& universe) {
    AlignResult out;
    out.fingerprint.ap_values.assign(universe.size(), kInvisibleRssDbm);
    std::size_t matched = 0;
    for (std::size_t i = 0; i < universe.size(); ++i) {
        auto it = scan.find(universe[i]);
        if (it == scan.end()) continue;
        double v = it->second;
        if (!std::isfinite(v)) v = kInvisibleRssDbm;
        out.fingerprint.ap_values[i] = std::clamp(v, kInvisibleRssDbm, kMaxRssDbm);
        ++matched;
    }
    out.dropped_aps = static_cast<int>(scan.size() - matched);
    return out;
}

namespace {

// Indices of ds.records grouped per RP, in rps order.
std::vector<std::vector<std::size_t>> indices_per_rp(const FingerprintDataset& ds) {
    std::vector<std::vector<std::size_t>> groups(ds.rps.size());
    for (std::size_t i = 0; i < ds.records.size(); ++i) {
        int r = ds.rp_index(ds.records[i].rp_id);
        if (r < 0) fail("record references unknown RP '" + ds.records[i].rp_id + "'");
        groups[static_cast<std::size_t>(r)].push_back(i);
    }
    return groups;
}

FingerprintDataset with_records(const FingerprintDataset& ds, std::vector<std::size_t> picks) {
    std::sort(picks.begin(), picks.end());
    FingerprintDataset out;
    out.building_id = ds.building_id;
    out.ap_universe = ds.ap_universe;
    out.rps = ds.rps;
    out.records.reserve(picks.size());
    for (std::size_t i : picks) out.records.push_back(ds.records[i]);
    return out;
}

}  // namespace

SplitResult split(const FingerprintDataset& ds, const SplitSpec& spec) {
    if (spec.train_per_rp < 1 || spec.test_per_rp < 1)
        fail("split spec requires train_per_rp >= 1 and test_per_rp >= 1");
    auto groups = indices_per_rp(ds);
    std::vector<std::size_t> train_picks, test_picks;
    for (std::size_t g = 0; g < groups.size(); ++g) {
        auto& idx = groups[g];
        std::size_t need = static_cast<std::size_t>(spec.train_per_rp + spec.test_per_rp);
        if (idx.size() < need)
            fail("RP '" + ds.rps[g].rp_id + "' has " + std::to_string(idx.size()) +
                 " fingerprints, split needs " + std::to_string(need));
        Rng rng(derive_seed(spec.seed, {hash_tag("split"), static_cast<std::uint64_t>(g)}));
        rng.shuffle(idx);
        for (int i = 0; i < spec.test_per_rp; ++i)
            test_picks.push_back(idx[static_cast<std::size_t>(i)]);
        for (int i = 0; i < spec.train_per_rp; ++i)
            train_picks.push_back(idx[static_cast<std::size_t>(spec.test_per_rp + i)]);
    }
    return {with_records(ds, std::move(train_picks)), with_records(ds, std::move(test_picks))};
}

FingerprintDataset sample_per_rp(const FingerprintDataset& ds, int per_rp, std::uint64_t seed) {
    if (per_rp < 1) fail("sample_per_rp requires per_rp >= 1");
    auto groups = indices_per_rp(ds);
    std::vector<std::size_t> picks;
    for (std::size_t g = 0; g < groups.size(); ++g) {
        auto& idx = groups[g];
        if (idx.size() < static_cast<std::size_t>(per_rp))
            fail("RP '" + ds.rps[g].rp_id + "' has " + std::to_string(idx.size()) +
                 " fingerprints, sample needs " + std::to_string(per_rp));
        Rng rng(derive_seed(seed, {hash_tag("sample"), static_cast<std::uint64_t>(g)}));
        rng.shuffle(idx);
        for (int i = 0; i < per_rp; ++i) picks.push_back(idx[static_cast<std::size_t>(i)]);
    }
    return with_records(ds, std::move(picks));
}

std::string to_csv(const FingerprintDataset& ds) {
    std::string out;
    out += "device,ci,rp_id,x,y";
    for (const auto& ap : ds.ap_universe) {
        out += ',';
        out += ap;
    }
    out += '\n';
    for (const auto& r : ds.records) {
        const ReferencePoint& p = ds.rp(r.rp_id);
        out += r.device_id;
        out += ',';
        out += std::to_string(r.ci);
        out += ',';
        out += r.rp_id;
        out += ',';
        out += format_double(p.x);
        out += ',';
        out += format_double(p.y);
        for (double v : r.ap_values) {
            out += ',';
            out += format_double(v);
        }
        out += '\n';
    }
    return out;
}

FingerprintDataset parse_csv(std::string_view text, std::string building_id) {
    FingerprintDataset ds;
    ds.building_id = std::move(building_id);

    std::vector<std::string_view> lines;
    std::size_t start = 0;
    while (start < text.size()) {
        std::size_t pos = text.find('\n', start);
        if (pos == std::string_view::npos) {
            lines.push_back(text.substr(start));
            break;
        }
        lines.push_back(text.substr(start, pos - start));
        start = pos + 1;
    }
    for (auto& ln : lines) {
        if (!ln.empty() && ln.back() == '\r') ln.remove_suffix(1);
    }
    if (lines.empty()) fail("empty CSV: missing header");

    auto header = split_fields(lines[0]);
    if (header.size() < 6)
        fail("header must contain device,ci,rp_id,x,y and at least one AP column");
    for (int i = 0; i < 5; ++i) {
        if (header[static_cast<std::size_t>(i)] != kHeaderPrefix[i])
            fail("header column " + std::to_string(i + 1) + " must be '" +
                 kHeaderPrefix[i] + "', got '" + std::string(header[static_cast<std::size_t>(i)]) + "'");
    }
    std::set<std::string_view> seen;
    for (std::size_t i = 5; i < header.size(); ++i) {
        if (!is_ap_column(header[i]))
            fail("unknown column '" + std::string(header[i]) + "' at position " +
                 std::to_string(i + 1));
        if (!seen.insert(header[i]).second)
            fail("duplicate AP column '" + std::string(header[i]) + "'");
        ds.ap_universe.emplace_back(header[i]);
    }
    std::size_t n_cols = header.size();

    for (std::size_t li = 1; li < lines.size(); ++li) {
        std::string_view line = lines[li];
        std::string where = "line " + std::to_string(li + 1);
        if (line.empty()) {
            if (li + 1 == lines.size()) continue;  // trailing newline
            fail(where + ": empty line");
        }
        auto f = split_fields(line);
        if (f.size() != n_cols)
            fail(where + ": expected " + std::to_string(n_cols) + " fields, got " +
                 std::to_string(f.size()));

        Fingerprint rec;
        rec.device_id = std::string(f[0]);
        if (rec.device_id.empty()) fail(where + ": empty device id");
        auto ci = parse_int(f[1]);
        if (!ci || *ci < 0) fail(where + ": invalid ci '" + std::string(f[1]) + "'");
        rec.ci = static_cast<int>(*ci);
        rec.rp_id = std::string(f[2]);
        if (rec.rp_id.empty()) fail(where + ": empty rp_id");
        auto x = parse_double(f[3]);
        auto y = parse_double(f[4]);
        if (!x || !std::isfinite(*x)) fail(where + ": invalid x '" + std::string(f[3]) + "'");
        if (!y || !std::isfinite(*y)) fail(where + ": invalid y '" + std::string(f[4]) + "'");

        int known = ds.rp_index(rec.rp_id);
        if (known < 0) {
            ds.rps.push_back({rec.rp_id, *x, *y});
        } else {
            const auto& p = ds.rps[static_cast<std::size_t>(known)];
            if (p.x != *x || p.y != *y)
                fail(where + ": RP '" + rec.rp_id + "' coordinates disagree with earlier rows");
        }

        rec.ap_values.reserve(ds.ap_universe.size());
        for (std::size_t c = 5; c < n_cols; ++c) {
            auto v = parse_double(f[c]);
            if (!v || !std::isfinite(*v))
                fail(where + ", column '" + ds.ap_universe[c - 5] + "': invalid RSS '" +
                     std::string(f[c]) + "'");
            if (*v < kInvisibleRssDbm || *v > kMaxRssDbm)
                fail(where + ", column '" + ds.ap_universe[c - 5] + "': RSS " +
                     format_double(*v) + " out of range [-100, 0]");
            rec.ap_values.push_back(*v);
        }
        ds.records.push_back(std::move(rec));
    }
    ds.validate();
    return ds;
}

namespace {

std::string path_stem(const std::string& path) {
    std::size_t slash = path.find_last_of("/\\");
    std::string name = slash == std::string::npos ? path : path.substr(slash + 1);
    std::size_t dot = name.find_last_of('.');
    return dot == std::string::npos ? name : name.substr(0, dot);
}

}  // namespace

FingerprintDataset load_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_csv(ss.str(), path_stem(path));
}

void save_csv(const FingerprintDataset& ds, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail("cannot open '" + path + "' for writing");
    out << to_csv(ds);
    if (!out) fail("write failed for '" + path + "'");
}

}  // namespace stellar
