#pragma once

// Simulated VoIP endpoints and the registrar they authenticate against.
//
// The phone reproduces the vulnerable firmware behavior this lab studies:
// an INVITE whose To-user matches the phone's number makes it ring, with no
// freshness, duplicate-Call-ID, or source checks of any kind. Too many such
// INVITEs inside the ring window crash the phone; it reboots and re-registers
// after a fixed delay.
//
// Signaling goes through the registrar (stateful proxy); the ACK and all RTP
// flow phone to phone.

#include <cmath>
#include <deque>
#include <functional>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "phonejack/crypto.hpp"
#include "phonejack/log.hpp"
#include "phonejack/netmodel.hpp"
#include "phonejack/rtp.hpp"
#include "phonejack/sip.hpp"

namespace phonejack {

struct PhoneError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ToneSource {
  double freq_hz = 440.0;
  double amplitude = 12000.0;

  std::int16_t sample(std::uint64_t index) const {
    const double v = amplitude * std::sin(2.0 * std::numbers::pi * freq_hz *
                                          static_cast<double>(index) /
                                          static_cast<double>(kSampleRate));
    return static_cast<std::int16_t>(std::lround(v));
  }

  std::vector<std::int16_t> block(std::uint64_t start, std::size_t n) const {
    std::vector<std::int16_t> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = sample(start + i);
    return out;
  }
};

struct PhoneConfig {
  std::string phone_id;
  std::string number;
  std::string password;
  Ipv4 gateway;
  HostId host;
  std::size_t crash_threshold = 50;
  std::uint64_t ring_window_micros = 10'000'000;
  std::uint64_t reboot_delay_micros = 15'000'000;
  std::uint64_t answer_delay_micros = 200'000;
  double tone_hz = 440.0;
};

enum class PhoneMode { Unregistered, Registered, Ringing, InCall, Crashed, Rebooting };

inline const char* mode_name(PhoneMode m) {
  switch (m) {
    case PhoneMode::Unregistered: return "Unregistered";
    case PhoneMode::Registered: return "Registered";
    case PhoneMode::Ringing: return "Ringing";
    case PhoneMode::InCall: return "InCall";
    case PhoneMode::Crashed: return "Crashed";
    case PhoneMode::Rebooting: return "Rebooting";
  }
  return "?";
}

enum class RegisterOutcome { Pending, Registered, AuthFailed, Timeout };

// Per-call media and signaling statistics, kept after the call ends.
struct CallStats {
  std::string call_id;
  std::string peer_number;
  bool established = false;
  bool done = false;
  bool success = false;
  std::string failure;  // "CalleeUnavailable", "Timeout", or empty
  std::size_t rtp_sent = 0;
  std::size_t rtp_received = 0;
  Sha256Stream sent_hash;
  Sha256Stream recv_hash;

  std::string sent_digest() const { return hex(sent_hash.finish()); }
  std::string recv_digest() const { return hex(recv_hash.finish()); }
};

// ---------------------------------------------------------------------------
// SDP stub: fixed body advertising the audio address, port, and codec.

inline Bytes make_sdp(Ipv4 ip, std::uint16_t rtp_port) {
  std::string s = "v=0\r\no=- 0 0 IN IP4 " + ip.str() +
                  "\r\ns=phonejack\r\nc=IN IP4 " + ip.str() +
                  "\r\nt=0 0\r\nm=audio " + std::to_string(rtp_port) +
                  " RTP/AVP 0\r\n";
  return Bytes(s.begin(), s.end());
}

struct SdpInfo {
  Ipv4 ip;
  std::uint16_t rtp_port = 0;
};

inline std::optional<SdpInfo> parse_sdp(const Bytes& body) {
  const std::string s(body.begin(), body.end());
  SdpInfo info;
  auto c = s.find("c=IN IP4 ");
  if (c == std::string::npos) return std::nullopt;
  auto eol = s.find_first_of("\r\n", c);
  auto ip = Ipv4::parse(s.substr(c + 9, eol - (c + 9)));
  if (!ip) return std::nullopt;
  info.ip = *ip;
  auto m = s.find("m=audio ");
  if (m == std::string::npos) return std::nullopt;
  int port = std::atoi(s.c_str() + m + 8);
  if (port < 1 || port > 65535) return std::nullopt;
  info.rtp_port = static_cast<std::uint16_t>(port);
  return info;
}

// ---------------------------------------------------------------------------
// Registrar

class Registrar {
 public:
  struct Binding {
    Ipv4 ip;
    std::uint16_t port = 5060;
  };

  Registrar(VirtualNetwork& net, HostId host) : net_(net), host_(host) {
    net_.set_handler(host_.ip, [this](const PacketRecord& r) { on_datagram(r); });
  }

  void provision(const std::string& number, const std::string& password) {
    passwords_[number] = password;
  }

  const std::map<std::string, Binding>& directory() const { return directory_; }

  std::uint64_t invite_response_timeout_micros = 2'000'000;

 private:
  struct ServerCall {
    DialogState dialog;
    Binding caller;
    Binding callee;
  };

  void on_datagram(const PacketRecord& r) {
    if (r.udp_dst_port != 5060) return;
    SipMessage m;
    try {
      m = parse_sip(r.payload);
    } catch (const SipError&) {
      return;  // junk on the signaling port
    }
    if (m.is_request() && m.method == SipMethod::Register) {
      handle_register(m, r);
      return;
    }
    if (m.is_request() && m.method == SipMethod::Invite) {
      handle_invite(m, r);
      return;
    }
    route_in_dialog(m, r);
  }

  void handle_register(const SipMessage& m, const PacketRecord& r) {
    const std::string number = m.header_uri_user("To");
    auto want = passwords_.find(number);
    const std::string got = m.header("X-Auth-Token").value_or("");
    if (want == passwords_.end() || want->second != got) {
      reply(make_response(403, reason_for(403), m), {r.ip_src, r.udp_src_port});
      return;
    }
    directory_[number] = Binding{r.ip_src, 5060};
    reply(make_response(200, reason_for(200), m), {r.ip_src, r.udp_src_port});
  }

  void handle_invite(const SipMessage& m, const PacketRecord& r) {
    const std::string call_id = m.call_id();
    if (auto it = calls_.find(call_id); it != calls_.end()) {
      // Retransmission: the FSM ignores it.
      auto res = dialog_step(it->second.dialog, m, Direction::Inbound);
      it->second.dialog = res.next;
      return;
    }
    const std::string to = m.header_uri_user("To");
    auto target = directory_.find(to);
    if (target == directory_.end()) {
      reply(make_response(404, reason_for(404), m), {r.ip_src, r.udp_src_port});
      return;
    }
    ServerCall call;
    call.dialog = DialogState{call_id, DialogRole::Server, CallPhase::Idle};
    call.caller = Binding{r.ip_src, r.udp_src_port};
    call.callee = target->second;
    auto res = dialog_step(call.dialog, m, Direction::Inbound);
    call.dialog = res.next;
    calls_[call_id] = call;
    for (const auto& out : res.emit) route_emission(calls_[call_id], out);
    net_.schedule_in(invite_response_timeout_micros, [this, call_id]() {
      auto it = calls_.find(call_id);
      if (it == calls_.end() || it->second.dialog.state != CallPhase::Trying)
        return;
      // Callee never progressed the call: report it unavailable.
      SipMessage m480;
      m480.kind = SipMessage::Kind::Response;
      m480.status_code = 480;
      m480.reason = reason_for(480);
      m480.headers = {{"Call-ID", call_id},
                      {"From", "<sip:server@" + host_.ip.str() + ">"},
                      {"To", "<sip:server@" + host_.ip.str() + ">"},
                      {"CSeq", "1 INVITE"},
                      {"Content-Length", "0"}};
      reply(m480, it->second.caller);
      it->second.dialog.state = CallPhase::Terminated;
    });
  }

  void route_in_dialog(const SipMessage& m, const PacketRecord& r) {
    auto it = calls_.find(m.call_id());
    if (it == calls_.end()) return;  // stray message, drop
    ServerCall& call = it->second;
    StepResult res;
    try {
      res = dialog_step(call.dialog, m, Direction::Inbound);
    } catch (const InvalidTransition&) {
      return;  // out-of-order packet, drop
    }
    call.dialog = res.next;
    const bool from_caller = r.ip_src == call.caller.ip;
    for (const auto& out : res.emit) {
      if (out.is_request() && out.method == SipMethod::Bye)
        reply(out, from_caller ? call.callee : call.caller);
      else
        route_emission(call, out);
    }
  }

  // Default routing: responses go back to the caller, forwarded requests to
  // the callee.
  void route_emission(ServerCall& call, const SipMessage& m) {
    reply(m, m.is_response() ? call.caller : call.callee);
  }

  void reply(const SipMessage& m, const Binding& to) {
    net_.send_datagram(host_.ip, to.ip, to.port, 5060, serialize_sip(m));
  }

  VirtualNetwork& net_;
  HostId host_;
  std::map<std::string, std::string> passwords_;
  std::map<std::string, Binding> directory_;
  std::map<std::string, ServerCall> calls_;
};

// ---------------------------------------------------------------------------
// Phone

class Phone {
 public:
  Phone(VirtualNetwork& net, ScenarioLog& log, PhoneConfig cfg)
      : net_(net), log_(log), cfg_(std::move(cfg)) {
    net_.set_handler(cfg_.host.ip, [this](const PacketRecord& r) { on_datagram(r); });
  }

  const PhoneConfig& config() const { return cfg_; }
  PhoneMode mode() const { return mode_; }
  RegisterOutcome register_outcome() const { return register_outcome_; }
  std::size_t invite_events_in_window() const {
    return invite_times_.size();
  }

  void send_register() {
    if (mode_ == PhoneMode::Crashed) return;
    SipUri uri{cfg_.number, cfg_.gateway.str(), 5060};
    SipMessage m = make_request(SipMethod::Register, uri, cfg_.number,
                                cfg_.number, "reg-" + cfg_.number + "-" +
                                                 std::to_string(++register_seq_),
                                1, cfg_.host.ip.str());
    m.set_header("X-Auth-Token", cfg_.password);
    register_outcome_ = RegisterOutcome::Pending;
    pending_register_call_id_ = m.call_id();
    net_.send_datagram(cfg_.host.ip, cfg_.gateway, 5060, 5060, serialize_sip(m));
    const std::string expect = m.call_id();
    net_.schedule_in(register_timeout_micros, [this, expect]() {
      if (register_outcome_ == RegisterOutcome::Pending &&
          pending_register_call_id_ == expect)
        register_outcome_ = RegisterOutcome::Timeout;
    });
  }

  // Starts a call; the caller streams floor(duration / 20 ms) packets after
  // the handshake, then hangs up. Returns the Call-ID.
  std::string start_call(const std::string& callee_number,
                         std::uint64_t duration_micros) {
    if (mode_ == PhoneMode::Crashed || mode_ == PhoneMode::Rebooting)
      throw PhoneError("phone " + cfg_.number + " cannot call while down");
    const std::string call_id =
        "call-" + cfg_.number + "-" + std::to_string(++call_seq_);
    ActiveCall call;
    call.stats.call_id = call_id;
    call.stats.peer_number = callee_number;
    call.dialog = DialogState{call_id, DialogRole::Caller, CallPhase::Idle};
    call.duration_micros = duration_micros;
    call.packets_to_send = duration_micros / kPacketIntervalMicros;
    setup_media_endpoint(call);

    SipMessage invite = make_invite(cfg_.number, callee_number, cfg_.gateway,
                                    call_id, cfg_.host.ip.str());
    invite.set_body(make_sdp(cfg_.host.ip, call.local_rtp_port));
    auto res = dialog_step(call.dialog, invite, Direction::Outbound);
    call.dialog = res.next;
    call.signal_peer = {cfg_.gateway, 5060};
    active_ = std::move(call);
    log_.append(net_.now(), cfg_.host.label, "CALL_START",
                call_id + " -> " + callee_number);
    send_sip(invite, {cfg_.gateway, 5060});

    const std::uint64_t serial = active_->serial;
    net_.schedule_in(call_timeout_micros, [this, call_id, serial]() {
      if (active_ && active_->serial == serial && !active_->stats.established)
        finish_call("Timeout");
    });
    return call_id;
  }

  bool call_done(const std::string& call_id) const {
    auto it = finished_.find(call_id);
    if (it != finished_.end()) return it->second.done;
    return false;
  }

  const CallStats* call_stats(const std::string& call_id) const {
    auto it = finished_.find(call_id);
    if (it != finished_.end()) return &it->second;
    if (active_ && active_->stats.call_id == call_id) return &active_->stats;
    return nullptr;
  }

  std::uint64_t register_timeout_micros = 2'000'000;
  std::uint64_t call_timeout_micros = 5'000'000;

 private:
  struct ActiveCall {
    DialogState dialog;
    CallStats stats;
    struct Addr {
      Ipv4 ip;
      std::uint16_t port;
    };
    Addr signal_peer{};             // where non-ACK signaling goes
    std::optional<SdpInfo> peer_media;
    std::uint16_t local_rtp_port = 0;
    std::uint32_t local_ssrc = 0;
    std::uint16_t next_seq = 0;
    std::uint32_t rtp_timestamp = 0;
    std::uint64_t media_sample_index = 0;
    std::uint64_t duration_micros = 0;
    std::size_t packets_to_send = 0;  // caller budget; callee streams to BYE
    bool media_running = false;
    std::uint64_t serial = 0;
  };

  void setup_media_endpoint(ActiveCall& call) {
    auto& rng = net_.rng();
    call.local_rtp_port = static_cast<std::uint16_t>(
        kRtpPortMin + 2 * (rng() % ((kRtpPortMax - kRtpPortMin) / 2)));
    call.local_ssrc = static_cast<std::uint32_t>(rng());
    call.next_seq = static_cast<std::uint16_t>(rng());
    call.rtp_timestamp = static_cast<std::uint32_t>(rng());
    call.serial = ++serial_counter_;
  }

  // ---- inbound ------------------------------------------------------------

  void on_datagram(const PacketRecord& r) {
    if (mode_ == PhoneMode::Crashed || mode_ == PhoneMode::Rebooting) return;
    if (r.udp_dst_port == 5060) {
      SipMessage m;
      try {
        m = parse_sip(r.payload);
      } catch (const SipError&) {
        return;
      }
      on_sip(m, r);
      return;
    }
    if (active_ && r.udp_dst_port == active_->local_rtp_port) {
      on_rtp(r);
      return;
    }
  }

  void on_sip(const SipMessage& m, const PacketRecord& r) {
    if (m.is_request()) {
      switch (m.method) {
        case SipMethod::Invite: accept_incoming(m, r); return;
        case SipMethod::Ack: on_ack(m); return;
        case SipMethod::Bye: on_bye(m); return;
        default: return;
      }
    }
    // Responses.
    const std::string cseq = m.header("CSeq").value_or("");
    if (cseq.find("REGISTER") != std::string::npos) {
      if (pending_register_call_id_ != m.call_id()) return;
      if (m.status_code == 200) {
        register_outcome_ = RegisterOutcome::Registered;
        if (mode_ == PhoneMode::Unregistered || mode_ == PhoneMode::Rebooting)
          mode_ = PhoneMode::Registered;
        log_.append(net_.now(), cfg_.host.label, "REG", cfg_.number);
      } else {
        register_outcome_ = RegisterOutcome::AuthFailed;
      }
      return;
    }
    if (!active_ || active_->stats.call_id != m.call_id()) return;
    StepResult res;
    try {
      res = dialog_step(active_->dialog, m, Direction::Inbound);
    } catch (const InvalidTransition&) {
      return;
    }
    const CallPhase before = active_->dialog.state;
    active_->dialog = res.next;
    if (m.status_code == 200 && before != CallPhase::Established &&
        active_->dialog.state == CallPhase::Established) {
      // Answer accepted: learn the media endpoint, ACK end to end, start media.
      active_->peer_media = parse_sdp(m.body);
      SipUri to_uri{active_->stats.peer_number,
                    active_->peer_media ? active_->peer_media->ip.str()
                                        : cfg_.gateway.str(),
                    5060};
      SipMessage ack = make_request(SipMethod::Ack, to_uri, cfg_.number,
                                    active_->stats.peer_number, m.call_id(), 1,
                                    cfg_.host.ip.str());
      auto ares = dialog_step(active_->dialog, ack, Direction::Outbound);
      active_->dialog = ares.next;
      send_sip(ack, {to_uri.host == cfg_.gateway.str() ? cfg_.gateway
                                                       : active_->peer_media->ip,
                     5060});
      active_->stats.established = true;
      mode_ = PhoneMode::InCall;
      start_media(true);
      return;
    }
    if (m.status_code >= 400 && active_->dialog.state == CallPhase::Terminated) {
      finish_call(m.status_code == 404 || m.status_code == 480
                      ? "CalleeUnavailable"
                      : "Rejected");
      return;
    }
  }

  // The vulnerable acceptance path. Counts every INVITE addressed to this
  // number inside the ring window; no timestamp, Call-ID, or source checks.
  void accept_incoming(const SipMessage& m, const PacketRecord& r) {
    if (m.header_uri_user("To") != cfg_.number) return;  // silent drop

    const std::uint64_t now = net_.now();
    invite_times_.push_back(now);
    prune_invites(now);
    if (mode_ == PhoneMode::Registered || mode_ == PhoneMode::Unregistered) {
      mode_ = PhoneMode::Ringing;
      log_.append(now, cfg_.host.label, "RING", "to=" + cfg_.number);
    }
    net_.schedule_in(cfg_.ring_window_micros + 1, [this]() {
      prune_invites(net_.now());
      if (mode_ == PhoneMode::Ringing && invite_times_.empty())
        mode_ = PhoneMode::Registered;
    });
    if (invite_times_.size() > cfg_.crash_threshold) {
      crash();
      return;
    }

    // Dialog adoption: a duplicate of the active call is left to the FSM's
    // retransmission handling; a new Call-ID displaces an unestablished call.
    if (active_ && active_->stats.call_id == m.call_id()) {
      auto res = dialog_step(active_->dialog, m, Direction::Inbound);
      active_->dialog = res.next;
      return;
    }
    if (active_ && active_->dialog.state == CallPhase::Established) return;

    ActiveCall call;
    call.stats.call_id = m.call_id();
    call.stats.peer_number = m.header_uri_user("From");
    call.dialog = DialogState{"", DialogRole::Callee, CallPhase::Idle};
    call.signal_peer = {r.ip_src, r.udp_src_port};
    call.peer_media = parse_sdp(m.body);
    setup_media_endpoint(call);
    auto res = dialog_step(call.dialog, m, Direction::Inbound);
    call.dialog = res.next;
    active_ = std::move(call);
    for (const auto& out : res.emit) send_sip(out, active_->signal_peer);

    // Ring, then answer after the configured delay.
    SipMessage ringing = make_response(180, reason_for(180), m);
    auto rres = dialog_step(active_->dialog, ringing, Direction::Outbound);
    active_->dialog = rres.next;
    for (const auto& out : rres.emit) send_sip(out, active_->signal_peer);

    const std::uint64_t serial = active_->serial;
    const SipMessage invite = m;
    net_.schedule_in(cfg_.answer_delay_micros, [this, serial, invite]() {
      answer(serial, invite);
    });
  }

  void answer(std::uint64_t serial, const SipMessage& invite) {
    if (mode_ == PhoneMode::Crashed || mode_ == PhoneMode::Rebooting) return;
    if (!active_ || active_->serial != serial) return;
    if (active_->dialog.state != CallPhase::Ringing || active_->dialog.answered)
      return;
    SipMessage ok = make_response(200, reason_for(200), invite);
    ok.set_body(make_sdp(cfg_.host.ip, active_->local_rtp_port));
    auto res = dialog_step(active_->dialog, ok, Direction::Outbound);
    active_->dialog = res.next;
    for (const auto& out : res.emit) send_sip(out, active_->signal_peer);
  }

  void on_ack(const SipMessage& m) {
    if (!active_ || active_->stats.call_id != m.call_id()) return;
    StepResult res;
    try {
      res = dialog_step(active_->dialog, m, Direction::Inbound);
    } catch (const InvalidTransition&) {
      return;
    }
    const CallPhase before = active_->dialog.state;
    active_->dialog = res.next;
    if (before != CallPhase::Established &&
        active_->dialog.state == CallPhase::Established) {
      active_->stats.established = true;
      mode_ = PhoneMode::InCall;
      start_media(false);
    }
  }

  void on_bye(const SipMessage& m) {
    if (!active_ || active_->stats.call_id != m.call_id()) return;
    StepResult res;
    try {
      res = dialog_step(active_->dialog, m, Direction::Inbound);
    } catch (const InvalidTransition&) {
      return;
    }
    active_->dialog = res.next;
    if (active_->dialog.state == CallPhase::Terminated) finish_call("");
  }

  // ---- media --------------------------------------------------------------

  void start_media(bool is_caller) {
    if (!active_) return;
    active_->media_running = true;
    const std::uint64_t serial = active_->serial;
    if (is_caller) {
      // Hang up half a tick after the last packet so the teardown never
      // races the peer's packet timer.
      const std::size_t n = active_->packets_to_send;
      const std::uint64_t bye_at =
          n > 0 ? (static_cast<std::uint64_t>(n - 1) * kPacketIntervalMicros +
                   kPacketIntervalMicros / 2)
                : kPacketIntervalMicros / 2;
      net_.schedule_in(bye_at, [this, serial]() { hang_up(serial); });
    }
    media_tick(serial, is_caller);
  }

  void media_tick(std::uint64_t serial, bool is_caller) {
    if (!active_ || active_->serial != serial || !active_->media_running) return;
    if (mode_ == PhoneMode::Crashed || mode_ == PhoneMode::Rebooting) return;
    if (is_caller && active_->stats.rtp_sent >= active_->packets_to_send) return;
    if (!active_->peer_media) return;

    ToneSource tone{cfg_.tone_hz};
    auto pcm = tone.block(active_->media_sample_index, kSamplesPerPacket);
    active_->media_sample_index += kSamplesPerPacket;
    RtpPacket p;
    p.payload_type = 0;
    p.sequence = active_->next_seq++;
    p.timestamp = active_->rtp_timestamp;
    active_->rtp_timestamp += kSamplesPerPacket;
    p.ssrc = active_->local_ssrc;
    p.payload = ulaw_encode_block(pcm);
    active_->stats.sent_hash.update(p.payload);
    ++active_->stats.rtp_sent;
    net_.send_datagram(cfg_.host.ip, active_->peer_media->ip,
                       active_->peer_media->rtp_port, active_->local_rtp_port,
                       encode_rtp(p));
    net_.schedule_in(kPacketIntervalMicros,
                     [this, serial, is_caller]() { media_tick(serial, is_caller); });
  }

  void on_rtp(const PacketRecord& r) {
    if (!active_ || active_->dialog.state == CallPhase::Terminated) return;
    RtpPacket p;
    try {
      p = decode_rtp(r.payload);
    } catch (const RtpError&) {
      return;
    }
    active_->stats.recv_hash.update(p.payload);
    ++active_->stats.rtp_received;
  }

  void hang_up(std::uint64_t serial) {
    if (!active_ || active_->serial != serial) return;
    if (mode_ == PhoneMode::Crashed || mode_ == PhoneMode::Rebooting) return;
    if (active_->dialog.state != CallPhase::Established) return;
    SipUri uri{active_->stats.peer_number, cfg_.gateway.str(), 5060};
    SipMessage bye = make_request(SipMethod::Bye, uri, cfg_.number,
                                  active_->stats.peer_number,
                                  active_->stats.call_id, 2, cfg_.host.ip.str());
    auto res = dialog_step(active_->dialog, bye, Direction::Outbound);
    active_->dialog = res.next;
    send_sip(bye, {cfg_.gateway, 5060});
    finish_call("");
  }

  // ---- lifecycle ----------------------------------------------------------

  void prune_invites(std::uint64_t now) {
    const std::uint64_t cutoff =
        now > cfg_.ring_window_micros ? now - cfg_.ring_window_micros : 0;
    while (!invite_times_.empty() && invite_times_.front() < cutoff)
      invite_times_.pop_front();
  }

  void crash() {
    log_.append(net_.now(), cfg_.host.label, "CRASH", cfg_.number);
    mode_ = PhoneMode::Crashed;
    net_.set_up(cfg_.host.ip, false);
    invite_times_.clear();
    if (active_) {
      active_->media_running = false;
      finish_call("Crashed");
    }
    net_.schedule_in(cfg_.reboot_delay_micros, [this]() { reboot(); });
  }

  void reboot() {
    if (mode_ != PhoneMode::Crashed) return;
    mode_ = PhoneMode::Rebooting;
    log_.append(net_.now(), cfg_.host.label, "REBOOT", cfg_.number);
    net_.set_up(cfg_.host.ip, true);
    send_register();
  }

  void finish_call(const std::string& failure) {
    if (!active_) return;
    active_->media_running = false;
    active_->stats.done = true;
    active_->stats.failure = failure;
    active_->stats.success = failure.empty() && active_->stats.established;
    log_.append(net_.now(), cfg_.host.label, "CALL_END",
                active_->stats.call_id +
                    " success=" + (active_->stats.success ? "1" : "0") +
                    " tx=" + std::to_string(active_->stats.rtp_sent) +
                    " rx=" + std::to_string(active_->stats.rtp_received));
    finished_.emplace(active_->stats.call_id, std::move(active_->stats));
    active_.reset();
    if (mode_ == PhoneMode::InCall || mode_ == PhoneMode::Ringing)
      mode_ = PhoneMode::Registered;
  }

  void send_sip(const SipMessage& m, const ActiveCall::Addr& to) {
    net_.send_datagram(cfg_.host.ip, to.ip, to.port, 5060, serialize_sip(m));
  }

  VirtualNetwork& net_;
  ScenarioLog& log_;
  PhoneConfig cfg_;
  PhoneMode mode_ = PhoneMode::Unregistered;
  RegisterOutcome register_outcome_ = RegisterOutcome::Pending;
  std::string pending_register_call_id_;
  std::deque<std::uint64_t> invite_times_;
  std::optional<ActiveCall> active_;
  std::map<std::string, CallStats> finished_;
  std::uint64_t register_seq_ = 0;
  std::uint64_t call_seq_ = 0;
  std::uint64_t serial_counter_ = 0;
};

// ---------------------------------------------------------------------------
// CallReport: both sides of one scripted call plus the wire transcript.

struct CallReport {
  std::string call_id;
  bool success = false;
  std::string failure;
  std::vector<std::string> transcript;  // message names in wire order
  std::size_t caller_rtp_sent = 0;
  std::size_t caller_rtp_received = 0;
  std::size_t callee_rtp_sent = 0;
  std::size_t callee_rtp_received = 0;
  std::string caller_sent_digest;
  std::string caller_recv_digest;
  std::string callee_sent_digest;
  std::string callee_recv_digest;
};

// Extracts the SIP transcript for one Call-ID from captured frames.
inline std::vector<std::string> sip_transcript(
    const std::vector<PacketRecord>& records, const std::string& call_id) {
  std::vector<std::string> out;
  for (const auto& r : records) {
    if (r.udp_dst_port != 5060 && r.udp_src_port != 5060) continue;
    try {
      SipMessage m = parse_sip(r.payload);
      if (m.call_id() == call_id) out.push_back(m.wire_name());
    } catch (const SipError&) {
    }
  }
  return out;
}

inline CallReport collect_call_report(const std::string& call_id,
                                      const Phone& caller, const Phone& callee,
                                      const std::vector<PacketRecord>& capture) {
  CallReport rep;
  rep.call_id = call_id;
  rep.transcript = sip_transcript(capture, call_id);
  if (const CallStats* cs = caller.call_stats(call_id)) {
    rep.success = cs->success;
    rep.failure = cs->failure;
    rep.caller_rtp_sent = cs->rtp_sent;
    rep.caller_rtp_received = cs->rtp_received;
    rep.caller_sent_digest = cs->sent_digest();
    rep.caller_recv_digest = cs->recv_digest();
  }
  if (const CallStats* cs = callee.call_stats(call_id)) {
    rep.callee_rtp_sent = cs->rtp_sent;
    rep.callee_rtp_received = cs->rtp_received;
    rep.callee_sent_digest = cs->sent_digest();
    rep.callee_recv_digest = cs->recv_digest();
  }
  return rep;
}

// Runs a complete scripted call, driving the network until it finishes.
inline CallReport place_call(VirtualNetwork& net, Phone& caller, Phone& callee,
                             std::uint64_t duration_micros) {
  auto tap = net.add_tap("call-tap", [](const PacketRecord& r) {
    return r.udp_dst_port == 5060 || r.udp_src_port == 5060;
  });
  const std::string call_id =
      caller.start_call(callee.config().number, duration_micros);
  const std::uint64_t budget =
      duration_micros + caller.call_timeout_micros + 10'000'000;
  std::uint64_t waited = 0;
  while (!caller.call_done(call_id) && waited < budget) {
    net.advance_clock(10'000);
    waited += 10'000;
  }
  net.advance_clock(1'000);  // let the final BYE land
  return collect_call_report(call_id, caller, callee, tap->records());
}

}  // namespace phonejack
