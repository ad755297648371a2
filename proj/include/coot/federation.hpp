#ifndef COOT_FEDERATION_HPP
#define COOT_FEDERATION_HPP

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <vector>

#include "coot/collab.hpp"

namespace coot {

enum class MsgKind { Hello, CentroidAnnounce, RoundDone, Bye };

const char* to_string(MsgKind kind);

/// Everything a collaborator ever puts on the wire. Centroid distributions
/// and round bookkeeping only; there is deliberately no way to embed a
/// DataView or raw instance rows.
struct Message {
    int version = 1;
    MsgKind kind = MsgKind::Hello;
    int sender = 0;
    int round = 0;
    // Hello / CentroidAnnounce
    int k = 0;
    int d = 0;
    std::vector<int> feature_ids;
    Eigen::MatrixXd centroids; // CentroidAnnounce only, k x d
    // RoundDone
    bool accepted = false;
    double db = 0.0;
};

constexpr std::uint32_t kMaxFrameBytes = 16u * 1024u * 1024u;

/// 4-byte big-endian length prefix + canonical UTF-8 text body (fixed field
/// order, shortest round-trip decimals). Throws on non-finite payload reals.
std::vector<std::uint8_t> encode(const Message& msg);

/// Exact inverse of encode on valid frames; throws Error{Proto} naming the
/// offending field on anything else. Never crashes on arbitrary bytes.
Message decode(const std::vector<std::uint8_t>& frame);

/// One peer's connection to the group: send to a specific peer (or all) and
/// pull raw frames from the shared inbox.
class Transport {
public:
    virtual ~Transport() = default;
    virtual void send_to(int peer, const std::vector<std::uint8_t>& frame) = 0;
    virtual void broadcast(const std::vector<std::uint8_t>& frame) = 0;
    virtual std::optional<std::vector<std::uint8_t>> recv(std::chrono::milliseconds timeout) = 0;
};

/// In-process transport: one mailbox per peer, synchronized queues.
class InProcBus {
public:
    explicit InProcBus(int peers);
    std::unique_ptr<Transport> endpoint(int id);

private:
    struct Mailbox {
        std::mutex mutex;
        std::condition_variable ready;
        std::deque<std::vector<std::uint8_t>> frames;
    };
    friend class InProcEndpoint;
    std::vector<std::shared_ptr<Mailbox>> mailboxes_;
};

struct PeerLocator {
    std::string host;
    int port = 0;
};

/// Parses "tcp://host:port".
PeerLocator parse_tcp_locator(const std::string& uri);

/// TCP mesh: peer i listens on its own locator's port and connects to every
/// lower-id peer's locator. Reader threads feed a single inbox.
std::unique_ptr<Transport> tcp_endpoint(int id, const std::vector<PeerLocator>& peers,
                                        std::chrono::milliseconds connect_timeout =
                                            std::chrono::milliseconds(10000));

/// Localhost shorthand: peer i listens on base_port + i.
std::unique_ptr<Transport> tcp_endpoint(int id, int peers, int base_port,
                                        std::chrono::milliseconds connect_timeout =
                                            std::chrono::milliseconds(10000));

/// Session: decodes inbox frames, buffers out-of-order rounds, tracks dead
/// peers, and runs the per-round broadcast barrier.
class PeerSession {
public:
    PeerSession(int id, std::vector<int> peer_ids, std::unique_ptr<Transport> transport,
                std::chrono::milliseconds timeout);

    /// Broadcasts `local_announce`, then blocks until a message of the same
    /// kind for `round` arrived from every live peer or the timeout passed.
    /// Timed-out peers are marked dead and skipped from then on.
    std::vector<Message> run_round_barrier(int round, const Message& local_announce);

    void send_bye(int round);
    const std::vector<int>& dead_peers() const { return dead_; }
    int live_peer_count() const;

private:
    std::optional<Message> next_message(std::chrono::milliseconds timeout);

    int id_;
    std::vector<int> peers_;
    std::vector<int> dead_;
    std::unique_ptr<Transport> transport_;
    std::chrono::milliseconds timeout_;
    std::map<std::pair<int, int>, std::deque<Message>> pending_; // (kind, round) -> messages
    std::map<int, bool> hello_seen_;
};

/// One collaborator's full federated run: Hello handshake, local fit, then
/// bulk-synchronous rounds of CentroidAnnounce / RoundDone until no peer
/// accepts an exchange (or max_rounds). Exchanges centroids only.
CollaboratorReport run_federated_peer(const DataView& view, int id, int peer_count,
                                      const CollabConfig& config, PeerSession& session);

} // namespace coot

#endif
