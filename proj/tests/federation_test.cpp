#include <doctest.h>

#include <future>
#include <random>
#include <thread>

#include "coot/federation.hpp"
#include "synth.hpp"

using namespace coot;

namespace {

Message random_message(Rng& rng) {
    std::uniform_real_distribution<double> real(-5.0, 5.0);
    Message msg;
    msg.kind = static_cast<MsgKind>(rng() % 4);
    msg.sender = static_cast<int>(rng() % 16);
    msg.round = static_cast<int>(rng() % 100);
    if (msg.kind == MsgKind::Hello || msg.kind == MsgKind::CentroidAnnounce) {
        msg.k = 1 + static_cast<int>(rng() % 4);
        msg.d = 1 + static_cast<int>(rng() % 5);
        for (int j = 0; j < msg.d; ++j) msg.feature_ids.push_back(static_cast<int>(rng() % 40));
    }
    if (msg.kind == MsgKind::CentroidAnnounce) {
        msg.centroids.resize(msg.k, msg.d);
        for (int i = 0; i < msg.k; ++i) {
            for (int j = 0; j < msg.d; ++j) msg.centroids(i, j) = real(rng);
        }
    }
    if (msg.kind == MsgKind::RoundDone) {
        msg.accepted = rng() % 2 == 0;
        msg.db = real(rng);
    }
    return msg;
}

void check_equal(const Message& a, const Message& b) {
    CHECK(a.version == b.version);
    CHECK(a.kind == b.kind);
    CHECK(a.sender == b.sender);
    CHECK(a.round == b.round);
    CHECK(a.k == b.k);
    CHECK(a.d == b.d);
    CHECK(a.feature_ids == b.feature_ids);
    if (a.kind == MsgKind::CentroidAnnounce) {
        REQUIRE(a.centroids.rows() == b.centroids.rows());
        CHECK(a.centroids == b.centroids); // shortest round-trip decimals are exact
    }
    CHECK(a.accepted == b.accepted);
    CHECK(a.db == b.db);
}

// Messages carry centroid distributions only; there is no constructor or
// field that could smuggle a collaborator's raw data across the wire.
static_assert(!std::is_constructible_v<Message, const DataView&>);
static_assert(!std::is_constructible_v<Message, const DataMatrix&>);

} // namespace

TEST_CASE("encode/decode round-trips every message kind") {
    Rng rng(2718);
    for (int t = 0; t < 200; ++t) {
        const Message msg = random_message(rng);
        const auto frame = encode(msg);
        const Message back = decode(frame);
        check_equal(msg, back);
        CHECK(encode(back) == frame);
    }
}

TEST_CASE("encoding is canonical") {
    Message hello;
    hello.kind = MsgKind::Hello;
    hello.sender = 3;
    hello.round = 0;
    hello.k = 2;
    hello.d = 4;
    hello.feature_ids = {0, 2, 5, 7};
    CHECK(encode(hello) == encode(hello));
    const std::string body(reinterpret_cast<const char*>(encode(hello).data()) + 4,
                           encode(hello).size() - 4);
    CHECK(body == "coot/1 Hello\nsender 3\nround 0\nk 2\nd 4\nfeatures 0 2 5 7\n");
}

TEST_CASE("decode rejects malformed frames") {
    Message msg;
    msg.kind = MsgKind::RoundDone;
    msg.sender = 1;
    msg.round = 2;
    msg.db = 0.5;
    auto frame = encode(msg);

    SUBCASE("unsupported version") {
        frame[4 + 5] = '9'; // "coot/9 ..."
        CHECK_THROWS_WITH_AS(decode(frame), doctest::Contains("unsupported version"), Error);
    }
    SUBCASE("truncated by one byte") {
        frame.pop_back();
        CHECK_THROWS_WITH_AS(decode(frame), doctest::Contains("truncated"), Error);
    }
    SUBCASE("oversized length prefix") {
        frame[0] = 0x7F;
        CHECK_THROWS_WITH_AS(decode(frame), doctest::Contains("16 MiB"), Error);
    }
    SUBCASE("empty frame") {
        CHECK_THROWS_AS(decode({}), Error);
    }
}

TEST_CASE("encode rejects non-finite payload reals") {
    Message msg;
    msg.kind = MsgKind::RoundDone;
    msg.db = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(encode(msg), Error);

    Message ann;
    ann.kind = MsgKind::CentroidAnnounce;
    ann.k = 1;
    ann.d = 1;
    ann.feature_ids = {0};
    ann.centroids = Eigen::MatrixXd::Constant(1, 1, std::numeric_limits<double>::infinity());
    CHECK_THROWS_AS(encode(ann), Error);
}

TEST_CASE("decode never crashes on fuzzed frames") {
    Rng rng(99);
    int decoded = 0;
    for (int t = 0; t < 5000; ++t) {
        std::vector<std::uint8_t> junk(rng() % 64);
        for (auto& b : junk) b = static_cast<std::uint8_t>(rng() % 256);
        try {
            decode(junk);
            ++decoded;
        } catch (const Error&) {
            // expected on essentially every draw
        }
    }
    CHECK(decoded <= 1); // random bytes passing full validation would be a miracle
}

TEST_CASE("tcp locators parse strictly") {
    const PeerLocator loc = parse_tcp_locator("tcp://127.0.0.1:7701");
    CHECK(loc.host == "127.0.0.1");
    CHECK(loc.port == 7701);
    CHECK_THROWS_AS(parse_tcp_locator("udp://127.0.0.1:7701"), Error);
    CHECK_THROWS_AS(parse_tcp_locator("tcp://127.0.0.1"), Error);
    CHECK_THROWS_AS(parse_tcp_locator("tcp://127.0.0.1:"), Error);
    CHECK_THROWS_AS(parse_tcp_locator("tcp://127.0.0.1:zzz"), Error);
    CHECK_THROWS_AS(parse_tcp_locator("tcp://127.0.0.1:99999"), Error);
}

TEST_CASE("in-process barrier delivers one announce per peer") {
    InProcBus bus(2);
    auto run_peer = [&](int id) {
        PeerSession session(id, {0, 1}, bus.endpoint(id), std::chrono::milliseconds(2000));
        Message ann;
        ann.kind = MsgKind::CentroidAnnounce;
        ann.sender = id;
        ann.round = 1;
        ann.k = 1;
        ann.d = 1;
        ann.feature_ids = {0};
        ann.centroids = Eigen::MatrixXd::Constant(1, 1, static_cast<double>(id));
        Message hello;
        hello.kind = MsgKind::Hello;
        hello.sender = id;
        hello.round = 0;
        hello.k = 1;
        hello.d = 1;
        hello.feature_ids = {0};
        session.run_round_barrier(0, hello);
        return session.run_round_barrier(1, ann);
    };
    auto f0 = std::async(std::launch::async, run_peer, 0);
    auto f1 = std::async(std::launch::async, run_peer, 1);
    const auto got0 = f0.get();
    const auto got1 = f1.get();
    REQUIRE(got0.size() == 1);
    REQUIRE(got1.size() == 1);
    CHECK(got0[0].sender == 1);
    CHECK(got1[0].sender == 0);
    CHECK(got0[0].centroids(0, 0) == 1.0);
}

TEST_CASE("a silent peer is marked dead and the rest proceed") {
    InProcBus bus(3); // peer 2 never speaks
    auto run_peer = [&](int id) {
        PeerSession session(id, {0, 1, 2}, bus.endpoint(id), std::chrono::milliseconds(300));
        Message hello;
        hello.kind = MsgKind::Hello;
        hello.sender = id;
        hello.round = 0;
        hello.k = 1;
        hello.d = 1;
        hello.feature_ids = {0};
        const auto got = session.run_round_barrier(0, hello);
        return std::make_pair(got.size(), session.dead_peers());
    };
    auto f0 = std::async(std::launch::async, run_peer, 0);
    auto f1 = std::async(std::launch::async, run_peer, 1);
    const auto [n0, dead0] = f0.get();
    const auto [n1, dead1] = f1.get();
    CHECK(n0 == 1);
    CHECK(n1 == 1);
    REQUIRE(dead0.size() == 1);
    CHECK(dead0[0] == 2);
    REQUIRE(dead1.size() == 1);
    CHECK(dead1[0] == 2);
}

TEST_CASE("out-of-order rounds are buffered for their own barrier") {
    InProcBus bus(2);
    auto ann = [](int sender, int round, double value) {
        Message msg;
        msg.kind = MsgKind::CentroidAnnounce;
        msg.sender = sender;
        msg.round = round;
        msg.k = 1;
        msg.d = 1;
        msg.feature_ids = {0};
        msg.centroids = Eigen::MatrixXd::Constant(1, 1, value);
        return msg;
    };
    auto hello = [](int sender) {
        Message msg;
        msg.kind = MsgKind::Hello;
        msg.sender = sender;
        msg.round = 0;
        msg.k = 1;
        msg.d = 1;
        msg.feature_ids = {0};
        return msg;
    };

    // Peer 1 floods round 1 and round 2 before peer 0 starts collecting.
    auto endpoint1 = bus.endpoint(1);
    endpoint1->send_to(0, encode(hello(1)));
    endpoint1->send_to(0, encode(ann(1, 2, 22.0)));
    endpoint1->send_to(0, encode(ann(1, 1, 11.0)));

    PeerSession session(0, {0, 1}, bus.endpoint(0), std::chrono::milliseconds(500));
    session.run_round_barrier(0, hello(0));
    const auto round1 = session.run_round_barrier(1, ann(0, 1, 1.0));
    REQUIRE(round1.size() == 1);
    CHECK(round1[0].centroids(0, 0) == 11.0);
    const auto round2 = session.run_round_barrier(2, ann(0, 2, 2.0));
    REQUIRE(round2.size() == 1);
    CHECK(round2[0].centroids(0, 0) == 22.0);
}

namespace {

CollabReport assemble(std::vector<CollaboratorReport> reports) {
    std::sort(reports.begin(), reports.end(),
              [](const CollaboratorReport& a, const CollaboratorReport& b) { return a.id < b.id; });
    CollabReport out;
    for (auto& rep : reports) {
        out.rounds_run = std::max(out.rounds_run, static_cast<int>(rep.rounds.size()));
        out.collaborators.push_back(std::move(rep));
    }
    return out;
}

} // namespace

TEST_CASE("federated runs match the centralized engine on both transports") {
    const DataMatrix m = synth::blobs(60, 3, 2, 2, 2.5, 7);
    Rng rng(17);
    const auto views = split_vertical(m, 3, rng, "fed");

    CollabConfig config;
    config.k = 2;
    config.lambda = 15.0;
    config.seed = 505;
    config.max_rounds = 6;

    auto [states, central] = run_co_ot(views, config);

    auto run_over = [&](auto make_endpoint) {
        std::vector<std::future<CollaboratorReport>> futures;
        for (int id = 0; id < 3; ++id) {
            futures.push_back(std::async(std::launch::async, [&, id] {
                PeerSession session(id, {0, 1, 2}, make_endpoint(id), std::chrono::milliseconds(15000));
                return run_federated_peer(views[static_cast<size_t>(id)], id, 3, config, session);
            }));
        }
        std::vector<CollaboratorReport> reports;
        for (auto& f : futures) reports.push_back(f.get());
        return assemble(std::move(reports));
    };

    InProcBus bus(3);
    const CollabReport inproc = run_over([&](int id) { return bus.endpoint(id); });
    const CollabReport tcp =
        run_over([&](int id) { return tcp_endpoint(id, 3, 39200, std::chrono::milliseconds(10000)); });

    CHECK(inproc.to_text() == tcp.to_text());
    CHECK(inproc.to_text() == central.to_text());
}
