#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include "refinery/rng.hpp"
#include "refinery/stats.hpp"

using namespace refinery;

namespace {

ScoreSeries series(std::string label, std::vector<double> values) {
    ScoreSeries s;
    s.label = std::move(label);
    for (std::size_t i = 0; i < values.size(); ++i) s.ids.push_back("r" + std::to_string(i));
    s.values = std::move(values);
    return s;
}

std::vector<std::string> split_lines(const std::string& text) {
    std::vector<std::string> lines;
    std::size_t start = 0;
    while (start < text.size()) {
        std::size_t end = text.find('\n', start);
        if (end == std::string::npos) end = text.size();
        lines.push_back(text.substr(start, end - start));
        start = end + 1;
    }
    return lines;
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
        std::size_t end = line.find(',', start);
        if (end == std::string::npos) {
            fields.push_back(line.substr(start));
            break;
        }
        fields.push_back(line.substr(start, end - start));
        start = end + 1;
    }
    return fields;
}

}  // namespace

TEST_SUITE("stats") {

TEST_CASE("round1 rounds half away from zero at one decimal") {
    CHECK(round1(2.25) == 2.3);
    CHECK(round1(2.24) == 2.2);
    CHECK(round1(-2.25) == -2.3);
    CHECK(round1(0.05) == 0.1);
    CHECK(round1(0.15) == 0.2);
    CHECK(round1(2.349999) == 2.3);
    CHECK(round1(200.8 / 3.0) == 66.9);
    CHECK(round1(8.433333333) == 8.4);
    CHECK(round1(0.0) == 0.0);
    CHECK(round1(7.0) == 7.0);
    CHECK(round1(-13.65) == -13.7);

    // Tiny negatives collapse to plain zero, not -0.0.
    double z = round1(-0.04);
    CHECK(z == 0.0);
    CHECK_FALSE(std::signbit(z));

    // Idempotent over a sweep.
    for (int i = -400; i <= 400; ++i) {
        double v = static_cast<double>(i) * 0.173;
        CHECK(round1(round1(v)) == round1(v));
    }
}

TEST_CASE("mean_fraction and mean_scores") {
    CHECK(mean_fraction(series("s", {0.25, 0.75})) == 0.5);
    CHECK(mean_scores(series("s", {0.5, 1.0})) == 75.0);
    CHECK(mean_scores(series("s", {1.0, 1.0, 0.0})) == 66.7);
    CHECK_THROWS_WITH_AS(mean_fraction(series("s", {})),
                         doctest::Contains("empty score series"), Error);
    CHECK_THROWS_WITH_AS(mean_scores(series("s", {})),
                         doctest::Contains("empty score series"), Error);
}

TEST_CASE("make_trial_summary averages the unrounded means") {
    // Per-dimension means land at 0.46 / 0.46 / 0.36 percent. Averaging the
    // rounded displays would give 0.5; the true mean rounds to 0.4.
    auto t = make_trial_summary("tiny", series("f", {0.0046}), series("cm", {0.0046}),
                                series("cn", {0.0036}));
    CHECK(t.label == "tiny");
    CHECK(t.faithfulness == 0.5);
    CHECK(t.completeness == 0.5);
    CHECK(t.conciseness == 0.4);
    CHECK(t.raw_faithfulness == doctest::Approx(0.46));
    CHECK(t.raw_average == doctest::Approx(1.28 / 3.0));
    CHECK(t.average == 0.4);

    auto w = make_trial_summary("wide", series("f", {1.0, 0.8, 0.6}),
                                series("cm", {0.5, 0.5, 0.5}), series("cn", {0.9, 0.7, 0.8}));
    CHECK(w.faithfulness == 80.0);
    CHECK(w.completeness == 50.0);
    CHECK(w.conciseness == 80.0);
    CHECK(w.average == 70.0);

    CHECK_THROWS_AS(make_trial_summary("bad", series("f", {}), series("cm", {0.5}),
                                       series("cn", {0.5})),
                    Error);
}

TEST_CASE("trial_from_percentages reproduces the published composite") {
    auto before = trial_from_percentages("before", 78.0, 46.4, 76.4);
    CHECK(before.faithfulness == 78.0);
    CHECK(before.completeness == 46.4);
    CHECK(before.conciseness == 76.4);
    CHECK(before.raw_average == doctest::Approx(66.9333333333).epsilon(1e-9));
    CHECK(before.average == 66.9);

    auto after = trial_from_percentages("after", 82.7, 60.0, 83.4);
    CHECK(after.raw_average == doctest::Approx(75.3666666667).epsilon(1e-9));
    CHECK(after.average == 75.4);
}

TEST_CASE("delta_row matches the published improvements") {
    auto before = trial_from_percentages("before", 78.0, 46.4, 76.4);
    auto after = trial_from_percentages("after", 82.7, 60.0, 83.4);
    auto d = delta_row(before, after);
    CHECK(d.faithfulness == 4.7);
    CHECK(d.completeness == 13.6);
    CHECK(d.conciseness == 7.0);
    CHECK(d.average == 8.4);

    auto back = delta_row(after, before);
    CHECK(back.faithfulness == -4.7);
    CHECK(back.completeness == -13.6);
    CHECK(back.conciseness == -7.0);
    CHECK(back.average == -8.4);
}

TEST_CASE("format_signed always carries a sign and one decimal") {
    CHECK(format_signed(4.7) == "+4.7");
    CHECK(format_signed(13.6) == "+13.6");
    CHECK(format_signed(-0.5) == "-0.5");
    CHECK(format_signed(0.0) == "+0.0");
    CHECK(format_signed(8.433333) == "+8.4");
    CHECK(format_signed(82.7 - 78.0) == "+4.7");
    // Values that round to zero lose their sign entirely.
    CHECK(format_signed(-0.04) == "+0.0");
}

TEST_CASE("max_min reproduces the four-trial gap rows") {
    CHECK(max_min({59.1, 59.0, 63.2, 55.3}) == 7.9);   // widest completeness swing
    CHECK(max_min({59.3, 57.7, 62.5, 58.4}) == 4.8);
    CHECK(max_min({84.2, 83.6, 83.4, 84.3}) == 0.9);
    CHECK(max_min({62.9, 62.6, 62.4, 62.9}) == 0.5);
    CHECK(max_min({84.2, 84.6, 84.5, 84.4}) == 0.4);
    CHECK(max_min({80.8, 80.9, 81.1, 79.6}) == 1.5);
    CHECK(max_min({85.3, 85.0, 83.9, 85.1}) == 1.4);
    CHECK(max_min({5.0}) == 0.0);
    // Input order is irrelevant.
    CHECK(max_min({55.3, 63.2, 59.0, 59.1}) == 7.9);
    CHECK_THROWS_WITH_AS(max_min({}), doctest::Contains("empty trial list"), Error);
}

TEST_CASE("composite averages across trials match the published table") {
    // Mean over four trials of the per-trial composite.
    auto composite4 = [](std::array<std::array<double, 3>, 4> trials) {
        double sum = 0;
        for (const auto& t : trials)
            sum += trial_from_percentages("t", t[0], t[1], t[2]).raw_average;
        return round1(sum / 4.0);
    };
    CHECK(composite4({{{80.8, 59.1, 85.3},
                       {80.9, 59.0, 85.0},
                       {81.1, 63.2, 83.9},
                       {79.6, 55.3, 85.1}}}) == 74.9);
    CHECK(composite4({{{84.2, 62.9, 84.2},
                       {83.6, 62.6, 84.6},
                       {83.4, 62.4, 84.5},
                       {84.3, 62.9, 84.4}}}) == 77.0);
}

TEST_CASE("exhaustive bootstrap counts every index tuple") {
    BootstrapOptions opt;
    opt.exhaustive = true;

    // d = (+1, -1, 0): observed mean is zero, counted against >= 0.
    // Sums over three independent draws from {+1, -1, 0}: 17 of 27 are >= 0.
    auto r = paired_bootstrap(series("base", {0.0, 1.0, 0.5}), series("treat", {1.0, 0.0, 0.5}),
                              opt);
    CHECK(r.p_value == 1.0);
    CHECK_FALSE(r.significant);
    CHECK(r.resamples == 27);
    CHECK(r.seed == 0);

    // d = (+1, +1, -1): observed +1; 7 of 27 tuples sum <= 0, p = 14/27.
    auto s = paired_bootstrap(series("base", {0.0, 0.0, 1.0}), series("treat", {1.0, 1.0, 0.0}),
                              opt);
    CHECK(s.p_value == 14.0 / 27.0);
    CHECK_FALSE(s.significant);
    CHECK(s.resamples == 27);

    // n = 2, d = (+0.5, -0.25): only the (d1, d1) tuple crosses, p = 2/4.
    auto two = paired_bootstrap(series("base", {0.0, 0.5}), series("treat", {0.5, 0.25}), opt);
    CHECK(two.p_value == 0.5);
    CHECK(two.resamples == 4);
}

TEST_CASE("monte carlo bootstrap tracks the exhaustive answer") {
    auto base = series("base", {0.0, 0.0, 1.0});
    auto treat = series("treat", {1.0, 1.0, 0.0});

    BootstrapOptions ex;
    ex.exhaustive = true;
    double exact = paired_bootstrap(base, treat, ex).p_value;

    BootstrapOptions mc;
    mc.resamples = 10000;
    mc.seed = 1;
    auto r = paired_bootstrap(base, treat, mc);
    CHECK(r.p_value >= 0.0);
    CHECK(r.p_value <= 1.0);
    CHECK(std::fabs(r.p_value - exact) < 0.03);
    CHECK(r.resamples == 10000);
    CHECK(r.seed == 1);
}

TEST_CASE("bootstrap extremes: constant improvement and identical series") {
    std::vector<double> flat(50, 0.2), up(50, 0.3);
    auto gain = paired_bootstrap(series("base", flat), series("treat", up));
    CHECK(gain.p_value < 0.001);
    CHECK(gain.significant);
    CHECK(gain.resamples == 10000);

    auto same = paired_bootstrap(series("base", flat), series("treat", flat));
    CHECK(same.p_value == 1.0);
    CHECK_FALSE(same.significant);
}

TEST_CASE("bootstrap is deterministic in the seed and symmetric under swap") {
    auto base = series("base", {0.2, 0.8, 0.4, 0.9, 0.1, 0.7});
    auto treat = series("treat", {0.6, 0.7, 0.9, 0.8, 0.5, 0.9});

    BootstrapOptions opt;
    opt.resamples = 4000;
    opt.seed = 42;
    auto a = paired_bootstrap(base, treat, opt);
    auto b = paired_bootstrap(base, treat, opt);
    CHECK(a.p_value == b.p_value);
    CHECK(a.significant == b.significant);

    // Swapping the series negates every difference; with a nonzero observed
    // mean the crossing count is identical, so p is too.
    auto swapped = paired_bootstrap(treat, base, opt);
    CHECK(swapped.p_value == a.p_value);

    BootstrapOptions ex;
    ex.exhaustive = true;
    CounterRng rng(9001, 0);
    for (int trial = 0; trial < 40; ++trial) {
        std::size_t n = 2 + rng.below(3);
        std::vector<double> lo(n), hi(n);
        double observed = 0;
        for (std::size_t i = 0; i < n; ++i) {
            lo[i] = 0.25 * static_cast<double>(rng.below(5));
            hi[i] = 0.25 * static_cast<double>(rng.below(5));
            observed += hi[i] - lo[i];
        }
        if (observed == 0) continue;
        auto fwd = paired_bootstrap(series("lo", lo), series("hi", hi), ex);
        auto rev = paired_bootstrap(series("hi", hi), series("lo", lo), ex);
        CHECK(fwd.p_value == rev.p_value);
        CHECK(fwd.p_value >= 0.0);
        CHECK(fwd.p_value <= 1.0);
    }
}

TEST_CASE("bootstrap rejects malformed input") {
    auto base = series("base", {0.1, 0.2, 0.3});
    CHECK_THROWS_WITH_AS(paired_bootstrap(base, series("t", {0.1, 0.2})),
                         doctest::Contains("equal-length"), Error);
    CHECK_THROWS_WITH_AS(paired_bootstrap(series("b", {0.1}), series("t", {0.2})),
                         doctest::Contains("at least 2 records"), Error);

    auto shuffled = series("t", {0.1, 0.2, 0.3});
    shuffled.ids = {"r1", "r0", "r2"};
    CHECK_THROWS_WITH_AS(paired_bootstrap(base, shuffled), doctest::Contains("id mismatch"),
                         Error);

    // Ids are only compared when both sides carry them.
    auto anonymous = series("t", {0.2, 0.3, 0.4});
    anonymous.ids.clear();
    CHECK_NOTHROW(paired_bootstrap(base, anonymous));

    BootstrapOptions ex;
    ex.exhaustive = true;
    std::vector<double> nine(9, 0.5), nine2(9, 0.6);
    CHECK_THROWS_WITH_AS(paired_bootstrap(series("b", nine), series("t", nine2), ex),
                         doctest::Contains("n <= 8"), Error);

    BootstrapOptions zero;
    zero.resamples = 0;
    CHECK_THROWS_WITH_AS(paired_bootstrap(base, anonymous, zero),
                         doctest::Contains("must be positive"), Error);
    zero.resamples = -5;
    CHECK_THROWS_WITH_AS(paired_bootstrap(base, anonymous, zero),
                         doctest::Contains("must be positive"), Error);
}

TEST_CASE("bootstrap holds its size under the null") {
    // Symmetric coin-flip differences: the two-sided rejection rate at 0.05
    // should stay near nominal.
    int significant = 0;
    for (int k = 0; k < 100; ++k) {
        std::vector<double> base(30, 0.5), treat(30);
        CounterRng rng(777, static_cast<std::uint64_t>(k));
        for (int i = 0; i < 30; ++i)
            treat[i] = rng.below(2) == 0 ? 0.4 : 0.6;
        BootstrapOptions opt;
        opt.resamples = 2000;
        opt.seed = static_cast<std::uint64_t>(k);
        auto r = paired_bootstrap(series("b", base), series("t", treat), opt);
        CHECK(r.p_value >= 0.0);
        CHECK(r.p_value <= 1.0);
        if (r.significant) ++significant;
    }
    CHECK(significant <= 15);
}

TEST_CASE("markdown table formats cells with stars and deltas") {
    std::vector<ReportRow> rows = {
        {"refeed", "faithfulness", 78.0, 82.7, 0.01},
        {"refeed", "completeness", 46.4, 60.0, 0.2},
        {"refeed", "conciseness", 76.4, 83.4, std::nullopt},
        {"refeed", "average", 200.8 / 3.0, 226.1 / 3.0, 0.001},
        {"dcr", "faithfulness", 78.0, 78.0, std::nullopt},
    };
    std::string expected =
        "| Pipeline | Faith. | Comp. | Conc. | Avg. |\n"
        "|---|---|---|---|---|\n"
        "| refeed | 82.7* (+4.7) | 60.0 (+13.6) | 83.4 (+7.0) | 75.4* (+8.4) |\n"
        "| dcr | 78.0 | — | — | — |\n";
    CHECK(emit_table(rows, TableFormat::markdown) == expected);
}

TEST_CASE("markdown table edge cases") {
    // Unchanged score with a p-value still shows the zero delta; p = 0.05 is
    // not starred.
    std::vector<ReportRow> rows = {
        {"b", "completeness", 40.0, 40.0, 0.5},
        {"a", "faithfulness", 50.0, 55.0, 0.05},
        {"b", "faithfulness", 42.0, 41.0, std::nullopt},
    };
    auto lines = split_lines(emit_table(rows, TableFormat::markdown));
    REQUIRE(lines.size() == 4);
    // Row order follows first appearance, not insertion of later cells.
    CHECK(lines[2] == "| b | 41.0 (-1.0) | 40.0 (+0.0) | — | — |");
    CHECK(lines[3] == "| a | 55.0 (+5.0) | — | — | — |");

    CHECK_THROWS_WITH_AS(
        emit_table({{"p", "speed", 1.0, 2.0, std::nullopt}}, TableFormat::markdown),
        doctest::Contains("unknown report dimension: speed"), Error);
}

TEST_CASE("csv table round-trips raw numerics") {
    std::vector<ReportRow> rows = {
        {"refeed", "faithfulness", 78.0, 82.7, 0.01},
        {"refeed", "completeness", 46.4, 60.0, 0.2},
        {"refeed", "conciseness", 76.4, 83.4, std::nullopt},
    };
    auto lines = split_lines(emit_table(rows, TableFormat::csv));
    REQUIRE(lines.size() == 4);
    CHECK(lines[0] == "pipeline,dimension,before,after,delta,p_value,significant");

    auto faith = split_csv(lines[1]);
    REQUIRE(faith.size() == 7);
    CHECK(faith[0] == "refeed");
    CHECK(faith[1] == "faithfulness");
    CHECK(std::stod(faith[2]) == 78.0);
    CHECK(std::stod(faith[3]) == 82.7);
    CHECK(std::stod(faith[4]) == 82.7 - 78.0);  // full precision survives
    CHECK(std::stod(faith[5]) == 0.01);
    CHECK(faith[6] == "true");

    auto comp = split_csv(lines[2]);
    CHECK(comp[6] == "false");

    // Without a p-value the last two fields are empty.
    auto conc = split_csv(lines[3]);
    REQUIRE(conc.size() == 7);
    CHECK(std::stod(conc[4]) == 83.4 - 76.4);
    CHECK(conc[5] == "");
    CHECK(conc[6] == "");

    CHECK(emit_table({{"x", "average", 0.5, 1.0, std::nullopt}}, TableFormat::csv) ==
          "pipeline,dimension,before,after,delta,p_value,significant\n"
          "x,average,0.5,1,0.5,,\n");
}

}  // TEST_SUITE
