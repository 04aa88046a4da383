#pragma once

// Deterministic in-process network fabric: hosts with ARP tables, a switch
// that delivers unicast by destination MAC, promiscuous capture taps, a
// virtual microsecond clock driving a stable event queue, and an optional
// uniform loss model. Single-threaded: all mutation happens inside
// advance_clock / send calls on the caller's thread.

#include <cstdlib>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <queue>
#include <random>
#include <string>
#include <vector>

#include "phonejack/log.hpp"
#include "phonejack/net.hpp"

namespace phonejack {

inline std::uint64_t seed_from_env() {
  if (const char* s = std::getenv("PHONEJACK_SEED"))
    return std::strtoull(s, nullptr, 10);
  return 0;
}

class Tap {
 public:
  using Filter = std::function<bool(const PacketRecord&)>;

  explicit Tap(std::string name, Filter filter = {})
      : name_(std::move(name)), filter_(std::move(filter)) {}

  const std::string& name() const { return name_; }
  const std::vector<PacketRecord>& records() const { return records_; }
  void clear() { records_.clear(); }

  void offer(const PacketRecord& r) {
    if (!filter_ || filter_(r)) records_.push_back(r);
  }

 private:
  std::string name_;
  Filter filter_;
  std::vector<PacketRecord> records_;
};

class VirtualNetwork {
 public:
  using Handler = std::function<void(const PacketRecord&)>;

  explicit VirtualNetwork(std::uint64_t seed = seed_from_env()) : rng_(seed) {}

  // ---- topology -----------------------------------------------------------

  const HostId& add_host(const std::string& label, Ipv4 ip,
                         std::optional<Mac> mac = std::nullopt) {
    if (hosts_.count(ip.value))
      throw NetError("duplicate host ip " + ip.str());
    Mac m = mac ? *mac : Mac::from_u64(0x020000000000ull | next_mac_++);
    for (auto& [k, h] : hosts_)
      if (h.id.mac == m) throw NetError("duplicate mac " + m.str());
    Host h;
    h.id = HostId{ip, m, label};
    h.advertised_mac = m;
    hosts_.emplace(ip.value, std::move(h));
    return hosts_.at(ip.value).id;
  }

  bool has_host(Ipv4 ip) const { return hosts_.count(ip.value) != 0; }

  const HostId& host(Ipv4 ip) const { return host_ref(ip).id; }

  const HostId* host_by_label(const std::string& label) const {
    for (auto& [k, h] : hosts_)
      if (h.id.label == label) return &h.id;
    return nullptr;
  }

  std::vector<HostId> hosts() const {
    std::vector<HostId> out;
    for (auto& [k, h] : hosts_) out.push_back(h.id);
    return out;
  }

  void set_handler(Ipv4 ip, Handler fn) { host_ref(ip).handler = std::move(fn); }

  void set_up(Ipv4 ip, bool up) { host_ref(ip).up = up; }
  bool is_up(Ipv4 ip) const { return host_ref(ip).up; }

  // The MAC that ARP-style resolution advertises for this IP. Interposing a
  // relay in front of a phone points this at the relay while unicast delivery
  // to the real MAC still reaches the phone itself.
  void set_advertised_mac(Ipv4 ip, Mac mac) { host_ref(ip).advertised_mac = mac; }
  Mac advertised_mac(Ipv4 ip) const { return host_ref(ip).advertised_mac; }

  // ---- ARP ----------------------------------------------------------------

  void arp_set(Ipv4 host, Ipv4 target, Mac mac) {
    host_ref(host).arp[target.value] = mac;
  }
  void arp_clear(Ipv4 host, Ipv4 target) { host_ref(host).arp.erase(target.value); }
  std::optional<Mac> arp_lookup(Ipv4 host, Ipv4 target) const {
    const auto& t = host_ref(host).arp;
    auto it = t.find(target.value);
    if (it == t.end()) return std::nullopt;
    return it->second;
  }
  void arp_set_default(Ipv4 host, std::optional<Mac> mac) {
    host_ref(host).arp_default = mac;
  }

  // Resolution order: explicit ARP entry, then default gateway entry, then
  // the network registry (stands in for a successful ARP exchange).
  Mac resolve(Ipv4 from, Ipv4 target) const {
    const Host& h = host_ref(from);
    if (auto it = h.arp.find(target.value); it != h.arp.end()) return it->second;
    if (h.arp_default) return *h.arp_default;
    if (auto it = hosts_.find(target.value); it != hosts_.end())
      return it->second.advertised_mac;
    throw UnknownHost("no ARP entry or registry match for " + target.str());
  }

  // ---- clock & events -----------------------------------------------------

  std::uint64_t now() const { return clock_; }

  void schedule_at(std::uint64_t t, std::function<void()> fn) {
    if (t < clock_) t = clock_;
    events_.push(Event{t, next_seq_++, std::move(fn)});
  }
  void schedule_in(std::uint64_t dt, std::function<void()> fn) {
    schedule_at(clock_ + dt, std::move(fn));
  }

  // Advances the clock by delta, running every due event in (time, enqueue)
  // order. Returns the number of frames delivered to hosts.
  std::size_t advance_clock(std::uint64_t delta_micros) {
    const std::uint64_t target = clock_ + delta_micros;
    std::size_t delivered_before = delivered_;
    while (!events_.empty() && events_.top().due <= target) {
      Event ev = events_.top();
      events_.pop();
      clock_ = ev.due;
      ev.fn();
    }
    clock_ = target;
    return delivered_ - delivered_before;
  }

  // Drains the event queue (bounded by max_micros of virtual time).
  void run_until_idle(std::uint64_t max_micros = 300'000'000) {
    const std::uint64_t limit = clock_ + max_micros;
    while (!events_.empty() && events_.top().due <= limit)
      advance_clock(events_.top().due - clock_);
  }

  // ---- traffic ------------------------------------------------------------

  double loss_rate() const { return loss_rate_; }
  void set_loss_rate(double r) { loss_rate_ = r; }

  std::uint64_t propagation_delay_micros = 100;

  // Builds a frame from sender's view (ARP resolution, checksums), offers it
  // to every tap, and schedules MAC-addressed delivery. Returns the frame as
  // the delivery receipt.
  PacketRecord send_datagram(Ipv4 from_ip, Ipv4 to_ip, std::uint16_t to_port,
                             std::uint16_t from_port, Bytes payload) {
    const Host& from = host_ref(from_ip);
    Mac dst = resolve(from_ip, to_ip);
    PacketRecord r = make_datagram(from.id, dst, to_ip, to_port, from_port,
                                   std::move(payload), clock_, next_ip_id_++);
    send_frame(r);
    return r;
  }

  // Injects a fully formed frame (attacker replay path). Checksums are sent
  // as stored.
  void send_frame(PacketRecord r) {
    if (r.payload.size() > kMaxUdpPayload)
      throw PayloadTooLarge("UDP payload of " + std::to_string(r.payload.size()) +
                            " octets exceeds " + std::to_string(kMaxUdpPayload));
    r.ts_micros = clock_;
    for (auto& tap : taps_) tap->offer(r);
    if (loss_rate_ > 0.0 &&
        std::uniform_real_distribution<double>(0.0, 1.0)(rng_) < loss_rate_) {
      if (log_)
        log_->append(clock_, label_for_mac(r.eth_dst), "DROP",
                     r.ip_src.str() + "->" + r.ip_dst.str());
      return;
    }
    schedule_at(clock_ + propagation_delay_micros, [this, r]() { deliver(r); });
  }

  // ---- capture ------------------------------------------------------------

  std::shared_ptr<Tap> add_tap(const std::string& name, Tap::Filter f = {}) {
    auto tap = std::make_shared<Tap>(name, std::move(f));
    taps_.push_back(tap);
    return tap;
  }

  // ---- host inbox (hosts without a handler) -------------------------------

  std::deque<PacketRecord>& inbox(Ipv4 ip) { return host_ref(ip).inbox; }

  std::mt19937_64& rng() { return rng_; }

  void attach_log(ScenarioLog* log) { log_ = log; }
  ScenarioLog* log() { return log_; }

 private:
  struct Host {
    HostId id;
    Mac advertised_mac;
    bool up = true;
    std::map<std::uint32_t, Mac> arp;
    std::optional<Mac> arp_default;
    Handler handler;
    std::deque<PacketRecord> inbox;
  };

  struct Event {
    std::uint64_t due;
    std::uint64_t seq;
    std::function<void()> fn;
    bool operator>(const Event& o) const {
      return due != o.due ? due > o.due : seq > o.seq;
    }
  };

  Host& host_ref(Ipv4 ip) {
    auto it = hosts_.find(ip.value);
    if (it == hosts_.end()) throw UnknownHost("no host " + ip.str());
    return it->second;
  }
  const Host& host_ref(Ipv4 ip) const {
    auto it = hosts_.find(ip.value);
    if (it == hosts_.end()) throw UnknownHost("no host " + ip.str());
    return it->second;
  }

  std::string label_for_mac(const Mac& m) const {
    for (auto& [k, h] : hosts_)
      if (h.id.mac == m) return h.id.label;
    return m.str();
  }

  void deliver(const PacketRecord& r) {
    ++delivered_;
    for (auto& [k, h] : hosts_) {
      if (h.id.mac != r.eth_dst) continue;
      if (!h.up) return;  // crashed hosts accept nothing
      if (h.handler)
        h.handler(r);
      else
        h.inbox.push_back(r);
      return;
    }
    // No owner for this MAC: the switch floods it nowhere; taps already saw it.
  }

  std::map<std::uint32_t, Host> hosts_;
  std::vector<std::shared_ptr<Tap>> taps_;
  std::priority_queue<Event, std::vector<Event>, std::greater<>> events_;
  std::uint64_t clock_ = 0;
  std::uint64_t next_seq_ = 0;
  std::uint64_t next_mac_ = 1;
  std::uint16_t next_ip_id_ = 1;
  std::size_t delivered_ = 0;
  double loss_rate_ = 0.0;
  std::mt19937_64 rng_;
  ScenarioLog* log_ = nullptr;
};

}  // namespace phonejack
