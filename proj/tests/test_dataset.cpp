#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "stellar/dataset.hpp"
#include "stellar/rng.hpp"

using namespace stellar;

namespace {

FingerprintDataset tiny_dataset(int per_rp = 6) {
    FingerprintDataset ds;
    ds.building_id = "test";
    ds.ap_universe = {"02:00:00:00:00:00", "02:00:00:00:00:01", "02:00:00:00:00:02"};
    ds.rps = {{"rp00", 0.0, 0.0}, {"rp01", 1.0, 0.0}};
    Rng rng(7);
    for (const auto& rp : ds.rps) {
        for (int k = 0; k < per_rp; ++k) {
            Fingerprint f;
            f.rp_id = rp.rp_id;
            f.device_id = "devA";
            f.ci = 0;
            for (int a = 0; a < 3; ++a) f.ap_values.push_back(rng.uniform(-95.0, -30.0));
            ds.records.push_back(f);
        }
    }
    return ds;
}

}  // namespace

TEST_CASE("normalize maps the dBm range onto [0,1]") {
    Fingerprint f;
    f.ap_values = {-100.0, 0.0, -50.0};
    auto n = normalize(f);
    CHECK(n.values[0] == 0.0);
    CHECK(n.values[1] == 1.0);
    CHECK(n.values[2] == 0.5);
}

TEST_CASE("normalize clamps out-of-range values and rejects non-finite ones") {
    CHECK(normalize_rss(-120.0) == 0.0);
    CHECK(normalize_rss(5.0) == 1.0);

    Fingerprint f;
    f.ap_values = {-50.0, std::nan(""), -60.0};
    CHECK_THROWS_WITH_AS(static_cast<void>(normalize(f)), doctest::Contains("index 1"),
                         std::runtime_error);
}

TEST_CASE("normalize is order-preserving and inverts exactly on valid data") {
    Rng rng(11);
    for (int i = 0; i < 200; ++i) {
        double a = rng.uniform(-100.0, 0.0);
        double b = rng.uniform(-100.0, 0.0);
        if (a < b) CHECK(normalize_rss(a) < normalize_rss(b));
        CHECK(denormalize_rss(normalize_rss(a)) == doctest::Approx(a).epsilon(1e-12));
    }
}

TEST_CASE("align orders a scan by the universe") {
    std::vector<std::string> universe = {"02:00:00:00:00:0a", "02:00:00:00:00:0b"};

    auto r1 = align({{"02:00:00:00:00:0a", -60.0}}, universe);
    CHECK(r1.fingerprint.ap_values == std::vector<double>{-60.0, -100.0});
    CHECK(r1.dropped_aps == 0);

    auto r2 = align({{"02:00:00:00:00:0a", -60.0}, {"02:00:00:00:00:0c", -40.0}}, universe);
    CHECK(r2.fingerprint.ap_values == std::vector<double>{-60.0, -100.0});
    CHECK(r2.dropped_aps == 1);

    auto r3 = align({}, universe);
    CHECK(r3.fingerprint.ap_values == std::vector<double>{-100.0, -100.0});
    CHECK(r3.dropped_aps == 0);
}

TEST_CASE("align output always matches the universe length") {
    Rng rng(3);
    std::vector<std::string> universe;
    for (int i = 0; i < 10; ++i) universe.push_back("ap" + std::to_string(i));
    for (int trial = 0; trial < 50; ++trial) {
        std::map<std::string, double> scan;
        int n = static_cast<int>(rng.below(15));
        for (int i = 0; i < n; ++i)
            scan["ap" + std::to_string(rng.below(20))] = rng.uniform(-120.0, 10.0);
        auto r = align(scan, universe);
        CHECK(r.fingerprint.ap_values.size() == universe.size());
        for (double v : r.fingerprint.ap_values) {
            CHECK(v >= -100.0);
            CHECK(v <= 0.0);
        }
    }
}

TEST_CASE("split keeps per-RP counts, disjointness and determinism") {
    auto ds = tiny_dataset(6);
    SplitSpec spec{5, 1, 99};
    auto r = split(ds, spec);
    CHECK(r.train.records.size() == 10);
    CHECK(r.test.records.size() == 2);

    // per-RP counts
    for (const auto& rp : ds.rps) {
        int train_n = 0, test_n = 0;
        for (const auto& rec : r.train.records)
            if (rec.rp_id == rp.rp_id) ++train_n;
        for (const auto& rec : r.test.records)
            if (rec.rp_id == rp.rp_id) ++test_n;
        CHECK(train_n == 5);
        CHECK(test_n == 1);
    }

    // disjoint: no test record equals a train record
    for (const auto& t : r.test.records)
        for (const auto& tr : r.train.records) CHECK(t.ap_values != tr.ap_values);

    auto r2 = split(ds, spec);
    CHECK(to_csv(r.train) == to_csv(r2.train));
    CHECK(to_csv(r.test) == to_csv(r2.test));
}

TEST_CASE("split rejects an RP with too few fingerprints, naming it") {
    auto ds = tiny_dataset(5);
    CHECK_THROWS_WITH_AS(static_cast<void>(split(ds, {5, 1, 0})), doctest::Contains("rp00"),
                         std::runtime_error);
}

TEST_CASE("csv round-trip reproduces a dataset exactly") {
    auto ds = tiny_dataset(3);
    auto back = parse_csv(to_csv(ds), ds.building_id);
    CHECK(back.ap_universe == ds.ap_universe);
    REQUIRE(back.records.size() == ds.records.size());
    for (std::size_t i = 0; i < ds.records.size(); ++i) {
        CHECK(back.records[i].ap_values == ds.records[i].ap_values);
        CHECK(back.records[i].rp_id == ds.records[i].rp_id);
        CHECK(back.records[i].device_id == ds.records[i].device_id);
        CHECK(back.records[i].ci == ds.records[i].ci);
    }
    REQUIRE(back.rps.size() == ds.rps.size());
    for (std::size_t i = 0; i < ds.rps.size(); ++i) {
        CHECK(back.rps[i].rp_id == ds.rps[i].rp_id);
        CHECK(back.rps[i].x == ds.rps[i].x);
        CHECK(back.rps[i].y == ds.rps[i].y);
    }
}

TEST_CASE("csv ingestion rejects out-of-range RSS with line and column") {
    std::string csv =
        "device,ci,rp_id,x,y,02:00:00:00:00:00\n"
        "devA,0,rp00,0,0,-55\n"
        "devA,0,rp00,0,0,5\n";
    CHECK_THROWS_WITH_AS(static_cast<void>(parse_csv(csv, "b")),
                         doctest::Contains("line 3"), std::runtime_error);
    try {
        static_cast<void>(parse_csv(csv, "b"));
    } catch (const std::exception& e) {
        CHECK(std::string(e.what()).find("02:00:00:00:00:00") != std::string::npos);
        CHECK(std::string(e.what()).find("out of range") != std::string::npos);
    }
}

TEST_CASE("csv ingestion rejects unknown columns by name") {
    std::string csv =
        "device,ci,rp_id,x,y,02:00:00:00:00:00,notes\n"
        "devA,0,rp00,0,0,-55,hello\n";
    CHECK_THROWS_WITH_AS(static_cast<void>(parse_csv(csv, "b")),
                         doctest::Contains("unknown column 'notes'"), std::runtime_error);
}

TEST_CASE("csv ingestion rejects malformed rows with the line number") {
    std::string csv =
        "device,ci,rp_id,x,y,02:00:00:00:00:00\n"
        "devA,0,rp00,0,0\n";
    CHECK_THROWS_WITH_AS(static_cast<void>(parse_csv(csv, "b")),
                         doctest::Contains("line 2"), std::runtime_error);

    std::string bad_ci =
        "device,ci,rp_id,x,y,02:00:00:00:00:00\n"
        "devA,-1,rp00,0,0,-55\n";
    CHECK_THROWS(static_cast<void>(parse_csv(bad_ci, "b")));

    std::string bad_coord =
        "device,ci,rp_id,x,y,02:00:00:00:00:00\n"
        "devA,0,rp00,0,0,-55\n"
        "devA,0,rp00,0,1,-56\n";
    CHECK_THROWS_WITH_AS(static_cast<void>(parse_csv(bad_coord, "b")),
                         doctest::Contains("coordinates disagree"), std::runtime_error);
}

TEST_CASE("csv ingestion accepts WAP-style column names") {
    std::string csv =
        "device,ci,rp_id,x,y,WAP001,WAP002\n"
        "devA,0,rp00,0,0,-55,-100\n";
    auto ds = parse_csv(csv, "b");
    CHECK(ds.ap_universe == std::vector<std::string>{"WAP001", "WAP002"});
}

TEST_CASE("sample_per_rp draws the requested count deterministically") {
    auto ds = tiny_dataset(6);
    auto s1 = sample_per_rp(ds, 2, 5);
    auto s2 = sample_per_rp(ds, 2, 5);
    CHECK(s1.records.size() == 4);
    CHECK(to_csv(s1) == to_csv(s2));
    CHECK_THROWS(static_cast<void>(sample_per_rp(ds, 7, 5)));
}

TEST_CASE("slice filters by device and CI") {
    auto ds = tiny_dataset(2);
    ds.records[0].device_id = "devB";
    ds.records[1].ci = 3;
    auto s = ds.slice("devA", 0);
    CHECK(s.records.size() == ds.records.size() - 2);
    for (const auto& r : s.records) {
        CHECK(r.device_id == "devA");
        CHECK(r.ci == 0);
    }
}
