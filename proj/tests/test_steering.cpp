#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "affectflow/rng.hpp"
#include "affectflow/steering.hpp"

using namespace affectflow;
using namespace affectflow::steering;

namespace {

annotate::EmotionVector ev(std::array<double, 6> e) {
    annotate::EmotionVector v;
    v.e = e;
    return v;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm(const std::vector<double>& a) { return std::sqrt(dot(a, a)); }

}  // namespace

TEST_CASE("random_orthonormal anchors are orthonormal") {
    const AnchorSet set = AnchorSet::random_orthonormal(24, 2025);
    set.validate();
    for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 6; ++j) {
            const double d = dot(set.anchors[static_cast<std::size_t>(i)], set.anchors[static_cast<std::size_t>(j)]);
            CHECK(d == doctest::Approx(i == j ? 1.0 : 0.0).scale(1.0).epsilon(1e-10));
        }
    CHECK_THROWS_AS(AnchorSet::random_orthonormal(4, 1), std::invalid_argument);
}

TEST_CASE("anchor CSV round trip and validation") {
    const AnchorSet set = AnchorSet::random_orthonormal(12, 7);
    const std::string path = (std::filesystem::temp_directory_path() / "af_anchors.csv").string();
    set.save_csv(path);
    const AnchorSet loaded = AnchorSet::load_csv(path);
    CHECK(loaded.d_emb == 12);
    for (std::size_t j = 0; j < 6; ++j)
        for (std::size_t c = 0; c < 12; ++c)
            CHECK(loaded.anchors[j][c] == doctest::Approx(set.anchors[j][c]).epsilon(1e-15));

    const std::string bad = (std::filesystem::temp_directory_path() / "af_anchors_bad.csv").string();
    std::ofstream out(bad);
    out << "1,0\n0,1\n1,1\n0,0\n1,0\n0,1\n";  // row "1,1" is not unit norm
    out.close();
    CHECK_THROWS_AS(AnchorSet::load_csv(bad), input_error);
}

TEST_CASE("build_steering: one-hot emotion selects its anchor exactly") {
    const AnchorSet set = AnchorSet::random_orthonormal(16, 3);
    for (std::size_t j = 0; j < 6; ++j) {
        std::array<double, 6> e{};
        e[j] = 1.0;
        const SteeringVector sv = build_steering(ev(e), 0.0, set, 1.0);
        for (std::size_t c = 0; c < 16; ++c)
            CHECK(sv.u[c] == doctest::Approx(set.anchors[j][c]).epsilon(1e-12));
        CHECK(sv.strength == 1.0);
    }
}

TEST_CASE("build_steering: strength scaling and the zero-lambda no-op") {
    const AnchorSet set = AnchorSet::random_orthonormal(8, 4);
    const auto e = ev({0.3, 0.2, 0.1, 0.2, 0.1, 0.1});
    CHECK(build_steering(e, 0.0, set, 0.0).strength == 0.0);
    CHECK(build_steering(e, 2.5, set, 1.0).strength == doctest::Approx(3.5));  // 1 + |dh/dt|
    CHECK(build_steering(e, 0.0, set, 0.5).strength == doctest::Approx(0.5));
}

TEST_CASE("build_steering: uniform emotions over orthonormal anchors") {
    const AnchorSet set = AnchorSet::random_orthonormal(16, 5);
    const auto e = ev({1.0 / 6, 1.0 / 6, 1.0 / 6, 1.0 / 6, 1.0 / 6, 1.0 / 6});
    const SteeringVector sv = build_steering(e, 0.0, set, 1.0);
    CHECK(norm(sv.u) == doctest::Approx(1.0).epsilon(1e-12));
    // oracle: normalize(sum a_j / 6) has equal projections 1/sqrt(6) on each anchor
    for (std::size_t j = 0; j < 6; ++j)
        CHECK(dot(sv.u, set.anchors[j]) == doctest::Approx(1.0 / std::sqrt(6.0)).epsilon(1e-10));
}

TEST_CASE("build_steering: direction is scale-invariant in the emotion vector") {
    const AnchorSet set = AnchorSet::random_orthonormal(10, 6);
    const auto e1 = ev({0.5, 0.1, 0.1, 0.1, 0.1, 0.1});
    auto e2 = e1;
    for (double& x : e2.e) x *= 3.7;  // not a simplex, the direction must not care
    const SteeringVector a = build_steering(e1, 0.0, set, 1.0);
    const SteeringVector b = build_steering(e2, 0.0, set, 1.0);
    for (std::size_t c = 0; c < a.u.size(); ++c)
        CHECK(a.u[c] == doctest::Approx(b.u[c]).epsilon(1e-12));
}

TEST_CASE("build_steering: dimension mismatch is rejected") {
    AnchorSet set = AnchorSet::random_orthonormal(8, 4);
    set.anchors[3].resize(7);
    CHECK_THROWS_AS(build_steering(ev({1, 0, 0, 0, 0, 0}), 0.0, set, 1.0),
                    std::invalid_argument);
}

TEST_CASE("inject: identity, zero base, norm identity, lambda linearity") {
    const AnchorSet set = AnchorSet::random_orthonormal(8, 9);
    SteeringVector sv = build_steering(ev({0.4, 0.2, 0.1, 0.1, 0.1, 0.1}), 1.0, set, 0.7);

    SplitMix64 rng(17);
    std::vector<double> hidden(8);
    for (double& v : hidden) v = rng.normal();

    SteeringVector zero = sv;
    zero.strength = 0.0;
    const auto same = inject(hidden, zero);
    for (std::size_t i = 0; i < hidden.size(); ++i) CHECK(same[i] == hidden[i]);  // bit-exact

    SteeringVector unit = sv;
    unit.strength = 1.0;
    const auto from_zero = inject(std::vector<double>(8, 0.0), unit);
    for (std::size_t i = 0; i < 8; ++i) CHECK(from_zero[i] == unit.u[i]);

    const auto moved = inject(hidden, sv);
    std::vector<double> diff(8);
    for (std::size_t i = 0; i < 8; ++i) diff[i] = moved[i] - hidden[i];
    CHECK(norm(diff) == doctest::Approx(sv.strength * norm(sv.u)).epsilon(1e-12));

    // linearity in lambda
    SteeringVector l1 = sv, l2 = sv, l12 = sv;
    l1.strength = 0.3;
    l2.strength = 1.1;
    l12.strength = 0.3 + 1.1;
    const auto two_step = inject(inject(hidden, l1), l2);
    const auto one_step = inject(hidden, l12);
    for (std::size_t i = 0; i < 8; ++i)
        CHECK(two_step[i] == doctest::Approx(one_step[i]).epsilon(1e-12));

    CHECK_THROWS_AS(inject(std::vector<double>(5, 0.0), sv), std::invalid_argument);
}

TEST_CASE("mock_decoder_run: injection shows up only at declared layers") {
    const AnchorSet set = AnchorSet::random_orthonormal(16, 21);
    const SteeringVector sv = build_steering(ev({0.5, 0.2, 0.1, 0.1, 0.05, 0.05}), 0.8, set, 1.3);

    const int seq_len = 5, layers = 6;
    const MockTrace steered = mock_decoder_run(seq_len, layers, sv, {2, 4}, 99);
    const MockTrace baseline = mock_decoder_run(seq_len, layers, sv, {}, 99);

    for (int l = 0; l < layers; ++l) {
        const auto& s = steered.layers[static_cast<std::size_t>(l)];
        const auto& b = baseline.layers[static_cast<std::size_t>(l)];
        for (int pos = 0; pos < seq_len; ++pos) {
            CHECK(s.pre_norm[static_cast<std::size_t>(pos)] == b.pre_norm[static_cast<std::size_t>(pos)]);
            if (l == 2 || l == 4) {
                CHECK(std::abs(s.shift_norm[static_cast<std::size_t>(pos)] - sv.strength * norm(sv.u)) <= 1e-9);
            } else {
                CHECK(s.shift_norm[static_cast<std::size_t>(pos)] == 0.0);
                CHECK(s.post_norm[static_cast<std::size_t>(pos)] == b.post_norm[static_cast<std::size_t>(pos)]);
            }
        }
    }

    // baseline states are reproducible from the seed alone
    const auto h = mock_hidden_state(99, 3, 1, 16);
    double n = 0.0;
    for (double v : h) n += v * v;
    CHECK(std::sqrt(n) == doctest::Approx(baseline.layers[3].pre_norm[1]).epsilon(1e-15));
}

TEST_CASE("mock_decoder_run: zero strength leaves the trace identical") {
    const AnchorSet set = AnchorSet::random_orthonormal(8, 22);
    SteeringVector sv = build_steering(ev({1, 0, 0, 0, 0, 0}), 0.0, set, 0.0);
    const MockTrace a = mock_decoder_run(4, 3, sv, {1}, 5);
    const MockTrace b = mock_decoder_run(4, 3, sv, {}, 5);
    for (std::size_t l = 0; l < 3; ++l)
        for (std::size_t pos = 0; pos < 4; ++pos) {
            CHECK(a.layers[l].post_norm[pos] == b.layers[l].post_norm[pos]);
            CHECK(a.layers[l].shift_norm[pos] == 0.0);
        }

    CHECK_THROWS_AS(mock_decoder_run(4, 3, sv, {3}, 5), std::invalid_argument);
    CHECK_THROWS_AS(mock_decoder_run(4, 3, sv, {-1}, 5), std::invalid_argument);
}

TEST_CASE("steering JSONL export schema") {
    ExportRecord rec;
    rec.t = 12.5;
    rec.u = {0.6, 0.8};
    rec.lambda = 1.5;
    rec.emotions = ev({0.5, 0.1, 0.1, 0.1, 0.1, 0.1});
    const std::string path = (std::filesystem::temp_directory_path() / "af_steer.jsonl").string();
    write_steering_jsonl(path, {rec, rec});

    std::ifstream in(path);
    std::string line;
    std::size_t count = 0;
    while (std::getline(in, line)) {
        const auto j = nlohmann::json::parse(line);
        CHECK(j.at("t").get<double>() == 12.5);
        CHECK(j.at("u").size() == 2);
        CHECK(j.at("lambda").get<double>() == 1.5);
        CHECK(j.at("emotions").size() == 6);
        ++count;
    }
    CHECK(count == 2);
}
