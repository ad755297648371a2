#include "coot/federation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <sstream>
#include <thread>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

namespace coot {

const char* to_string(MsgKind kind) {
    switch (kind) {
    case MsgKind::Hello: return "Hello";
    case MsgKind::CentroidAnnounce: return "CentroidAnnounce";
    case MsgKind::RoundDone: return "RoundDone";
    case MsgKind::Bye: return "Bye";
    }
    return "Hello";
}

namespace {

std::optional<MsgKind> parse_kind(const std::string& s) {
    if (s == "Hello") return MsgKind::Hello;
    if (s == "CentroidAnnounce") return MsgKind::CentroidAnnounce;
    if (s == "RoundDone") return MsgKind::RoundDone;
    if (s == "Bye") return MsgKind::Bye;
    return std::nullopt;
}

[[noreturn]] void proto_error(const std::string& what) {
    throw Error(ErrorKind::Proto, "decode: " + what);
}

std::vector<std::string> tokens_of(const std::string& line) {
    std::vector<std::string> toks;
    std::istringstream in(line);
    std::string t;
    while (in >> t) toks.push_back(t);
    return toks;
}

long parse_int_field(const std::string& tok, const char* field) {
    try {
        size_t pos = 0;
        const long v = std::stol(tok, &pos);
        if (pos != tok.size()) proto_error(std::string("bad ") + field + " '" + tok + "'");
        return v;
    } catch (const Error&) {
        throw;
    } catch (const std::exception&) {
        proto_error(std::string("bad ") + field + " '" + tok + "'");
    }
}

double parse_real_field(const std::string& tok, const char* field) {
    double v = 0.0;
    try {
        v = parse_double(tok);
    } catch (const Error&) {
        proto_error(std::string("bad ") + field + " '" + tok + "'");
    }
    if (!std::isfinite(v)) proto_error(std::string("non-finite ") + field);
    return v;
}

} // namespace

std::vector<std::uint8_t> encode(const Message& msg) {
    std::ostringstream body;
    body << "coot/" << msg.version << " " << to_string(msg.kind) << "\n";
    body << "sender " << msg.sender << "\n";
    body << "round " << msg.round << "\n";
    if (msg.kind == MsgKind::Hello || msg.kind == MsgKind::CentroidAnnounce) {
        body << "k " << msg.k << "\n";
        body << "d " << msg.d << "\n";
        body << "features";
        for (int f : msg.feature_ids) body << " " << f;
        body << "\n";
    }
    if (msg.kind == MsgKind::CentroidAnnounce) {
        if (msg.centroids.rows() != msg.k || msg.centroids.cols() != msg.d) {
            throw Error(ErrorKind::Proto, "encode: centroid matrix is not k x d");
        }
        for (Eigen::Index i = 0; i < msg.centroids.rows(); ++i) {
            body << "c";
            for (Eigen::Index j = 0; j < msg.centroids.cols(); ++j) {
                const double x = msg.centroids(i, j);
                if (!std::isfinite(x)) {
                    throw Error(ErrorKind::Proto, "encode: non-finite centroid coordinate");
                }
                body << " " << format_double(x);
            }
            body << "\n";
        }
    }
    if (msg.kind == MsgKind::RoundDone) {
        if (!std::isfinite(msg.db)) throw Error(ErrorKind::Proto, "encode: non-finite db");
        body << "accepted " << (msg.accepted ? 1 : 0) << "\n";
        body << "db " << format_double(msg.db) << "\n";
    }

    const std::string text = body.str();
    if (text.size() > kMaxFrameBytes) throw Error(ErrorKind::Proto, "encode: frame exceeds 16 MiB cap");
    std::vector<std::uint8_t> frame(4 + text.size());
    const std::uint32_t len = static_cast<std::uint32_t>(text.size());
    frame[0] = static_cast<std::uint8_t>(len >> 24);
    frame[1] = static_cast<std::uint8_t>(len >> 16);
    frame[2] = static_cast<std::uint8_t>(len >> 8);
    frame[3] = static_cast<std::uint8_t>(len);
    std::memcpy(frame.data() + 4, text.data(), text.size());
    return frame;
}

Message decode(const std::vector<std::uint8_t>& frame) {
    if (frame.size() < 4) proto_error("truncated frame (no length prefix)");
    const std::uint32_t len = (static_cast<std::uint32_t>(frame[0]) << 24) |
                              (static_cast<std::uint32_t>(frame[1]) << 16) |
                              (static_cast<std::uint32_t>(frame[2]) << 8) |
                              static_cast<std::uint32_t>(frame[3]);
    if (len > kMaxFrameBytes) proto_error("length prefix exceeds 16 MiB cap");
    if (frame.size() != 4 + static_cast<size_t>(len)) proto_error("truncated frame");

    std::string text(reinterpret_cast<const char*>(frame.data() + 4), len);
    std::istringstream in(text);
    std::string line;

    auto next_line = [&](const char* what) {
        if (!std::getline(in, line)) proto_error(std::string("missing ") + what);
        return tokens_of(line);
    };

    Message msg;
    {
        auto toks = next_line("header");
        if (toks.size() != 2 || toks[0].rfind("coot/", 0) != 0) proto_error("bad header line");
        msg.version = static_cast<int>(parse_int_field(toks[0].substr(5), "version"));
        if (msg.version != 1) proto_error("unsupported version " + std::to_string(msg.version));
        auto kind = parse_kind(toks[1]);
        if (!kind) proto_error("unknown kind '" + toks[1] + "'");
        msg.kind = *kind;
    }
    {
        auto toks = next_line("sender");
        if (toks.size() != 2 || toks[0] != "sender") proto_error("expected sender field");
        msg.sender = static_cast<int>(parse_int_field(toks[1], "sender"));
        if (msg.sender < 0) proto_error("negative sender");
    }
    {
        auto toks = next_line("round");
        if (toks.size() != 2 || toks[0] != "round") proto_error("expected round field");
        msg.round = static_cast<int>(parse_int_field(toks[1], "round"));
        if (msg.round < 0) proto_error("negative round");
    }

    if (msg.kind == MsgKind::Hello || msg.kind == MsgKind::CentroidAnnounce) {
        auto k_toks = next_line("k");
        if (k_toks.size() != 2 || k_toks[0] != "k") proto_error("expected k field");
        msg.k = static_cast<int>(parse_int_field(k_toks[1], "k"));
        auto d_toks = next_line("d");
        if (d_toks.size() != 2 || d_toks[0] != "d") proto_error("expected d field");
        msg.d = static_cast<int>(parse_int_field(d_toks[1], "d"));
        if (msg.k < 1 || msg.d < 1) proto_error("k and d must be positive");
        auto f_toks = next_line("features");
        if (f_toks.empty() || f_toks[0] != "features") proto_error("expected features field");
        for (size_t i = 1; i < f_toks.size(); ++i) {
            msg.feature_ids.push_back(static_cast<int>(parse_int_field(f_toks[i], "feature id")));
        }
        if (static_cast<int>(msg.feature_ids.size()) != msg.d) {
            proto_error("features count does not match d");
        }
    }
    if (msg.kind == MsgKind::CentroidAnnounce) {
        msg.centroids.resize(msg.k, msg.d);
        for (int i = 0; i < msg.k; ++i) {
            auto toks = next_line("centroid row");
            if (toks.empty() || toks[0] != "c") proto_error("expected centroid row");
            if (static_cast<int>(toks.size()) != msg.d + 1) proto_error("centroid row width mismatch");
            for (int j = 0; j < msg.d; ++j) {
                msg.centroids(i, j) = parse_real_field(toks[static_cast<size_t>(j) + 1], "centroid");
            }
        }
    }
    if (msg.kind == MsgKind::RoundDone) {
        auto a_toks = next_line("accepted");
        if (a_toks.size() != 2 || a_toks[0] != "accepted") proto_error("expected accepted field");
        const long a = parse_int_field(a_toks[1], "accepted");
        if (a != 0 && a != 1) proto_error("accepted must be 0 or 1");
        msg.accepted = a == 1;
        auto d_toks = next_line("db");
        if (d_toks.size() != 2 || d_toks[0] != "db") proto_error("expected db field");
        msg.db = parse_real_field(d_toks[1], "db");
    }

    if (std::getline(in, line) && !line.empty()) proto_error("trailing content after message body");
    return msg;
}

// ---------------------------------------------------------------------------
// In-process bus

class InProcEndpoint : public Transport {
public:
    InProcEndpoint(int id, std::vector<std::shared_ptr<InProcBus::Mailbox>> mailboxes)
        : id_(id), mailboxes_(std::move(mailboxes)) {}

    void send_to(int peer, const std::vector<std::uint8_t>& frame) override {
        if (peer < 0 || peer >= static_cast<int>(mailboxes_.size())) {
            throw Error(ErrorKind::Net, "send_to: unknown peer " + std::to_string(peer));
        }
        auto& box = *mailboxes_[static_cast<size_t>(peer)];
        {
            std::lock_guard<std::mutex> lock(box.mutex);
            box.frames.push_back(frame);
        }
        box.ready.notify_one();
    }

    void broadcast(const std::vector<std::uint8_t>& frame) override {
        for (int p = 0; p < static_cast<int>(mailboxes_.size()); ++p) {
            if (p != id_) send_to(p, frame);
        }
    }

    std::optional<std::vector<std::uint8_t>> recv(std::chrono::milliseconds timeout) override {
        auto& box = *mailboxes_[static_cast<size_t>(id_)];
        std::unique_lock<std::mutex> lock(box.mutex);
        if (!box.ready.wait_for(lock, timeout, [&] { return !box.frames.empty(); })) {
            return std::nullopt;
        }
        auto frame = std::move(box.frames.front());
        box.frames.pop_front();
        return frame;
    }

private:
    int id_;
    std::vector<std::shared_ptr<InProcBus::Mailbox>> mailboxes_;
};

InProcBus::InProcBus(int peers) {
    for (int i = 0; i < peers; ++i) mailboxes_.push_back(std::make_shared<Mailbox>());
}

std::unique_ptr<Transport> InProcBus::endpoint(int id) {
    if (id < 0 || id >= static_cast<int>(mailboxes_.size())) {
        throw Error(ErrorKind::Net, "endpoint: id out of range");
    }
    return std::make_unique<InProcEndpoint>(id, mailboxes_);
}

// ---------------------------------------------------------------------------
// TCP mesh

namespace {

void write_all(int fd, const std::uint8_t* data, size_t size) {
    size_t done = 0;
    while (done < size) {
        const ssize_t n = ::send(fd, data + done, size - done, MSG_NOSIGNAL);
        if (n <= 0) throw Error(ErrorKind::Net, "tcp send failed");
        done += static_cast<size_t>(n);
    }
}

bool read_all(int fd, std::uint8_t* data, size_t size) {
    size_t done = 0;
    while (done < size) {
        const ssize_t n = ::recv(fd, data + done, size - done, 0);
        if (n <= 0) return false;
        done += static_cast<size_t>(n);
    }
    return true;
}

} // namespace

class TcpEndpoint : public Transport {
public:
    TcpEndpoint(int id, const std::vector<PeerLocator>& locators,
                std::chrono::milliseconds connect_timeout)
        : id_(id) {
        const int peers = static_cast<int>(locators.size());
        fds_.assign(static_cast<size_t>(peers), -1);

        const int listen_fd = ::socket(AF_INET, SOCK_STREAM, 0);
        if (listen_fd < 0) throw Error(ErrorKind::Net, "cannot create listen socket");
        const int one = 1;
        ::setsockopt(listen_fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
        sockaddr_in addr{};
        addr.sin_family = AF_INET;
        addr.sin_addr.s_addr = htonl(INADDR_ANY);
        addr.sin_port = htons(static_cast<std::uint16_t>(locators[static_cast<size_t>(id)].port));
        if (::bind(listen_fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
            ::close(listen_fd);
            throw Error(ErrorKind::Net, "cannot bind port " +
                                            std::to_string(locators[static_cast<size_t>(id)].port));
        }
        if (::listen(listen_fd, peers) != 0) {
            ::close(listen_fd);
            throw Error(ErrorKind::Net, "listen failed");
        }

        // Connect to every lower id; accept from every higher id. The
        // connector sends its id as a 4-byte header before any frames.
        std::thread acceptor([&] {
            for (int count = id + 1; count < peers; ++count) {
                const int fd = ::accept(listen_fd, nullptr, nullptr);
                if (fd < 0) return;
                std::uint8_t hdr[4];
                if (!read_all(fd, hdr, 4)) {
                    ::close(fd);
                    return;
                }
                const int peer = static_cast<int>((hdr[0] << 24) | (hdr[1] << 16) | (hdr[2] << 8) | hdr[3]);
                if (peer >= 0 && peer < peers) fds_[static_cast<size_t>(peer)] = fd;
            }
        });

        const auto deadline = std::chrono::steady_clock::now() + connect_timeout;
        for (int peer = 0; peer < id; ++peer) {
            const PeerLocator& target_loc = locators[static_cast<size_t>(peer)];
            sockaddr_in target{};
            target.sin_family = AF_INET;
            if (::inet_pton(AF_INET, target_loc.host.c_str(), &target.sin_addr) != 1) {
                acceptor.detach();
                ::close(listen_fd);
                throw Error(ErrorKind::Net, "cannot parse peer address '" + target_loc.host + "'");
            }
            target.sin_port = htons(static_cast<std::uint16_t>(target_loc.port));
            int fd = -1;
            while (true) {
                fd = ::socket(AF_INET, SOCK_STREAM, 0);
                if (::connect(fd, reinterpret_cast<sockaddr*>(&target), sizeof(target)) == 0) break;
                ::close(fd);
                fd = -1;
                if (std::chrono::steady_clock::now() >= deadline) break;
                std::this_thread::sleep_for(std::chrono::milliseconds(20));
            }
            if (fd < 0) {
                acceptor.detach();
                ::close(listen_fd);
                throw Error(ErrorKind::Net, "cannot reach peer " + std::to_string(peer) + " at " +
                                                target_loc.host + ":" + std::to_string(target_loc.port));
            }
            std::uint8_t hdr[4] = {static_cast<std::uint8_t>(id_ >> 24), static_cast<std::uint8_t>(id_ >> 16),
                                   static_cast<std::uint8_t>(id_ >> 8), static_cast<std::uint8_t>(id_)};
            write_all(fd, hdr, 4);
            fds_[static_cast<size_t>(peer)] = fd;
        }
        acceptor.join();
        ::close(listen_fd);

        for (int peer = 0; peer < peers; ++peer) {
            if (peer == id_) continue;
            if (fds_[static_cast<size_t>(peer)] < 0) {
                throw Error(ErrorKind::Net,
                            "tcp mesh incomplete: no link to peer " + std::to_string(peer));
            }
            const int nodelay = 1;
            ::setsockopt(fds_[static_cast<size_t>(peer)], IPPROTO_TCP, TCP_NODELAY, &nodelay,
                         sizeof(nodelay));
            readers_.emplace_back(&TcpEndpoint::reader_loop, this, fds_[static_cast<size_t>(peer)]);
        }
    }

    ~TcpEndpoint() override {
        for (int fd : fds_) {
            if (fd >= 0) ::shutdown(fd, SHUT_RDWR);
        }
        for (auto& t : readers_) {
            if (t.joinable()) t.join();
        }
        for (int fd : fds_) {
            if (fd >= 0) ::close(fd);
        }
    }

    void send_to(int peer, const std::vector<std::uint8_t>& frame) override {
        if (peer < 0 || peer >= static_cast<int>(fds_.size()) || fds_[static_cast<size_t>(peer)] < 0) {
            throw Error(ErrorKind::Net, "send_to: no link to peer " + std::to_string(peer));
        }
        std::lock_guard<std::mutex> lock(send_mutex_);
        write_all(fds_[static_cast<size_t>(peer)], frame.data(), frame.size());
    }

    void broadcast(const std::vector<std::uint8_t>& frame) override {
        for (int peer = 0; peer < static_cast<int>(fds_.size()); ++peer) {
            if (peer != id_ && fds_[static_cast<size_t>(peer)] >= 0) send_to(peer, frame);
        }
    }

    std::optional<std::vector<std::uint8_t>> recv(std::chrono::milliseconds timeout) override {
        std::unique_lock<std::mutex> lock(inbox_mutex_);
        if (!inbox_ready_.wait_for(lock, timeout, [&] { return !inbox_.empty(); })) {
            return std::nullopt;
        }
        auto frame = std::move(inbox_.front());
        inbox_.pop_front();
        return frame;
    }

private:
    void reader_loop(int fd) {
        while (true) {
            std::uint8_t hdr[4];
            if (!read_all(fd, hdr, 4)) return;
            const std::uint32_t len = (static_cast<std::uint32_t>(hdr[0]) << 24) |
                                      (static_cast<std::uint32_t>(hdr[1]) << 16) |
                                      (static_cast<std::uint32_t>(hdr[2]) << 8) |
                                      static_cast<std::uint32_t>(hdr[3]);
            if (len > kMaxFrameBytes) return; // poisoned stream, drop the link
            std::vector<std::uint8_t> frame(4 + len);
            std::memcpy(frame.data(), hdr, 4);
            if (len > 0 && !read_all(fd, frame.data() + 4, len)) return;
            {
                std::lock_guard<std::mutex> lock(inbox_mutex_);
                inbox_.push_back(std::move(frame));
            }
            inbox_ready_.notify_one();
        }
    }

    int id_;
    std::vector<int> fds_;
    std::vector<std::thread> readers_;
    std::mutex send_mutex_;
    std::mutex inbox_mutex_;
    std::condition_variable inbox_ready_;
    std::deque<std::vector<std::uint8_t>> inbox_;
};

PeerLocator parse_tcp_locator(const std::string& uri) {
    const std::string scheme = "tcp://";
    if (uri.rfind(scheme, 0) != 0) {
        throw Error(ErrorKind::Config, "locator '" + uri + "' must start with tcp://");
    }
    const std::string rest = uri.substr(scheme.size());
    const auto colon = rest.rfind(':');
    if (colon == std::string::npos || colon == 0 || colon + 1 == rest.size()) {
        throw Error(ErrorKind::Config, "locator '" + uri + "' must be tcp://host:port");
    }
    PeerLocator loc;
    loc.host = rest.substr(0, colon);
    try {
        size_t pos = 0;
        loc.port = std::stoi(rest.substr(colon + 1), &pos);
        if (pos != rest.size() - colon - 1) throw std::invalid_argument(rest);
    } catch (const std::exception&) {
        throw Error(ErrorKind::Config, "locator '" + uri + "' has a bad port");
    }
    if (loc.port < 1 || loc.port > 65535) {
        throw Error(ErrorKind::Config, "locator '" + uri + "' port out of range");
    }
    return loc;
}

std::unique_ptr<Transport> tcp_endpoint(int id, const std::vector<PeerLocator>& peers,
                                        std::chrono::milliseconds connect_timeout) {
    if (id < 0 || id >= static_cast<int>(peers.size())) {
        throw Error(ErrorKind::Config, "tcp_endpoint: id out of range");
    }
    return std::make_unique<TcpEndpoint>(id, peers, connect_timeout);
}

std::unique_ptr<Transport> tcp_endpoint(int id, int peers, int base_port,
                                        std::chrono::milliseconds connect_timeout) {
    std::vector<PeerLocator> locators;
    for (int p = 0; p < peers; ++p) {
        locators.push_back(PeerLocator{"127.0.0.1", base_port + p});
    }
    return tcp_endpoint(id, locators, connect_timeout);
}

// ---------------------------------------------------------------------------
// Round barrier

PeerSession::PeerSession(int id, std::vector<int> peer_ids, std::unique_ptr<Transport> transport,
                         std::chrono::milliseconds timeout)
    : id_(id), peers_(std::move(peer_ids)), transport_(std::move(transport)), timeout_(timeout) {
    peers_.erase(std::remove(peers_.begin(), peers_.end(), id_), peers_.end());
}

int PeerSession::live_peer_count() const {
    return static_cast<int>(peers_.size());
}

std::optional<Message> PeerSession::next_message(std::chrono::milliseconds timeout) {
    auto frame = transport_->recv(timeout);
    if (!frame) return std::nullopt;
    Message msg = decode(*frame);
    if (msg.kind == MsgKind::CentroidAnnounce && !hello_seen_[msg.sender]) {
        throw Error(ErrorKind::Proto, "peer " + std::to_string(msg.sender) + " announced centroids before Hello");
    }
    if (msg.kind == MsgKind::Hello) hello_seen_[msg.sender] = true;
    return msg;
}

std::vector<Message> PeerSession::run_round_barrier(int round, const Message& local_announce) {
    transport_->broadcast(encode(local_announce));
    const int kind_key = static_cast<int>(local_announce.kind);

    std::map<int, Message> collected;
    auto take_pending = [&] {
        auto it = pending_.find({kind_key, round});
        if (it == pending_.end()) return;
        while (!it->second.empty()) {
            Message msg = std::move(it->second.front());
            it->second.pop_front();
            collected.emplace(msg.sender, std::move(msg));
        }
        pending_.erase(it);
    };
    take_pending();

    const auto deadline = std::chrono::steady_clock::now() + timeout_;
    while (collected.size() < peers_.size()) {
        const auto now = std::chrono::steady_clock::now();
        if (now >= deadline) break;
        auto msg = next_message(std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now));
        if (!msg) break;
        if (msg->kind == MsgKind::Bye) {
            // A finished peer will not speak again: drop it from the group.
            peers_.erase(std::remove(peers_.begin(), peers_.end(), msg->sender), peers_.end());
            if (!std::count(dead_.begin(), dead_.end(), msg->sender)) dead_.push_back(msg->sender);
            collected.erase(msg->sender);
            continue;
        }
        if (static_cast<int>(msg->kind) == kind_key && msg->round == round &&
            std::count(peers_.begin(), peers_.end(), msg->sender)) {
            collected.emplace(msg->sender, std::move(*msg));
        } else {
            // Out-of-order round or other kind: hold for its own barrier.
            pending_[{static_cast<int>(msg->kind), msg->round}].push_back(std::move(*msg));
        }
    }

    // Anyone still missing is declared dead and excluded from later rounds.
    std::vector<int> survivors;
    for (int p : peers_) {
        if (collected.count(p)) {
            survivors.push_back(p);
        } else {
            dead_.push_back(p);
        }
    }
    peers_ = std::move(survivors);

    std::vector<Message> out;
    out.reserve(collected.size());
    for (auto& [sender, msg] : collected) out.push_back(std::move(msg));
    return out;
}

void PeerSession::send_bye(int round) {
    Message bye;
    bye.kind = MsgKind::Bye;
    bye.sender = id_;
    bye.round = round;
    transport_->broadcast(encode(bye));
}

// ---------------------------------------------------------------------------
// Federated collaborator

CollaboratorReport run_federated_peer(const DataView& view, int id, int peer_count,
                                      const CollabConfig& config, PeerSession& session) {
    const int k = config.k_per_view.empty() ? config.k : config.k_per_view[static_cast<size_t>(id)];
    Rng rng(derive_seed(config.seed, static_cast<std::uint64_t>(id)));

    CollaboratorState state;
    state.id = id;
    state.view = view;
    state.model = fit_local_model(config.local_algo, view, k, config.lambda, rng, config.local_fit);

    CollaboratorReport report;
    report.id = id;
    report.before = state_quality(state);

    Message hello;
    hello.kind = MsgKind::Hello;
    hello.sender = id;
    hello.round = 0;
    hello.k = k;
    hello.d = static_cast<int>(view.dim());
    hello.feature_ids = view.origin.feature_ids;
    session.run_round_barrier(0, hello);

    int round = 1;
    for (; round <= config.max_rounds; ++round) {
        Message announce;
        announce.kind = MsgKind::CentroidAnnounce;
        announce.sender = id;
        announce.round = round;
        announce.k = static_cast<int>(state.model.centroids.rows());
        announce.d = static_cast<int>(state.model.centroids.cols());
        announce.feature_ids = view.origin.feature_ids;
        announce.centroids = state.model.centroids;
        const std::vector<Message> received = session.run_round_barrier(round, announce);

        std::vector<CentroidSnapshot> snapshots;
        snapshots.push_back(snapshot_of(state));
        for (const auto& msg : received) {
            snapshots.push_back(CentroidSnapshot{msg.sender, msg.centroids, msg.feature_ids});
        }
        std::sort(snapshots.begin(), snapshots.end(),
                  [](const CentroidSnapshot& a, const CentroidSnapshot& b) { return a.id < b.id; });

        auto [next, record] = run_turn(state, snapshots, config, round);
        state = std::move(next);
        report.rounds.push_back(record);

        Message done;
        done.kind = MsgKind::RoundDone;
        done.sender = id;
        done.round = round;
        done.accepted = record.accepted;
        done.db = std::isfinite(record.db_after) ? record.db_after : 0.0;
        const std::vector<Message> dones = session.run_round_barrier(round, done);

        bool any_accept = record.accepted;
        for (const auto& msg : dones) any_accept = any_accept || msg.accepted;
        if (!any_accept) break;
    }
    (void)peer_count;

    report.after = state_quality(state);
    session.send_bye(round);
    return report;
}

} // namespace coot
