#pragma once

// Minimal SIP: text framing (start line, CRLF headers, blank line, body),
// the INVITE/ACK/BYE/REGISTER request set, numeric responses, and the
// message-driven call dialog state machine.
//
// Call flow produced by well-behaved endpoints, as observed on the wire:
//   1. caller -> server  INVITE
//   2. server -> caller  100 Trying
//   3. server -> callee  INVITE (forwarded)
//   4. callee -> server  100 Trying
//   5. callee -> server  180 Ringing, relayed server -> caller
//   6. callee -> server  200 OK on answer, relayed server -> caller
//   7. caller -> callee  ACK (end to end); media starts
//   8. either party -> server BYE, forwarded to the other party
// Retransmitted in-state messages are ignored silently (UDP duplicates).

#include <algorithm>
#include <cctype>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "phonejack/net.hpp"

namespace phonejack {

struct SipError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct EmptyInput : SipError {
  EmptyInput() : SipError("empty SIP input") {}
};
struct MalformedStartLine : SipError {
  using SipError::SipError;
};
struct MissingHeader : SipError {
  explicit MissingHeader(const std::string& name)
      : SipError("missing required header: " + name), header(name) {}
  std::string header;
};
struct InvalidTransition : SipError {
  using SipError::SipError;
};

enum class SipMethod { Invite, Ack, Bye, Register };

inline const char* method_name(SipMethod m) {
  switch (m) {
    case SipMethod::Invite: return "INVITE";
    case SipMethod::Ack: return "ACK";
    case SipMethod::Bye: return "BYE";
    case SipMethod::Register: return "REGISTER";
  }
  return "?";
}

inline std::optional<SipMethod> parse_method(const std::string& s) {
  if (s == "INVITE") return SipMethod::Invite;
  if (s == "ACK") return SipMethod::Ack;
  if (s == "BYE") return SipMethod::Bye;
  if (s == "REGISTER") return SipMethod::Register;
  return std::nullopt;
}

struct SipUri {
  std::string user;
  std::string host;
  std::uint16_t port = 5060;

  friend bool operator==(const SipUri&, const SipUri&) = default;

  std::string str() const {
    std::string s = "sip:" + user + "@" + host;
    if (port != 5060) s += ":" + std::to_string(port);
    return s;
  }

  static std::optional<SipUri> parse(std::string s) {
    if (s.rfind("sip:", 0) != 0) return std::nullopt;
    s = s.substr(4);
    auto at = s.find('@');
    if (at == std::string::npos || at == 0) return std::nullopt;
    SipUri u;
    u.user = s.substr(0, at);
    std::string rest = s.substr(at + 1);
    auto colon = rest.find(':');
    if (colon == std::string::npos) {
      u.host = rest;
    } else {
      u.host = rest.substr(0, colon);
      int p = std::atoi(rest.c_str() + colon + 1);
      if (p < 1 || p > 65535) return std::nullopt;
      u.port = static_cast<std::uint16_t>(p);
    }
    if (u.user.empty() || u.host.empty()) return std::nullopt;
    return u;
  }
};

struct SipMessage {
  enum class Kind { Request, Response };

  Kind kind = Kind::Request;
  SipMethod method = SipMethod::Invite;  // requests
  SipUri uri;                            // requests
  int status_code = 0;                   // responses
  std::string reason;                    // responses
  std::vector<std::pair<std::string, std::string>> headers;
  Bytes body;

  friend bool operator==(const SipMessage&, const SipMessage&) = default;

  bool is_request() const { return kind == Kind::Request; }
  bool is_response() const { return kind == Kind::Response; }

  // First header value by case-insensitive name.
  std::optional<std::string> header(const std::string& name) const {
    for (const auto& [n, v] : headers)
      if (iequal(n, name)) return v;
    return std::nullopt;
  }

  void set_header(const std::string& name, const std::string& value) {
    for (auto& [n, v] : headers)
      if (iequal(n, name)) {
        v = value;
        return;
      }
    headers.emplace_back(name, value);
  }

  std::string call_id() const { return header("Call-ID").value_or(""); }

  // User part of a name-addr header like "To: <sip:201@10.0.0.2>".
  std::string header_uri_user(const std::string& name) const {
    auto v = header(name);
    if (!v) return "";
    auto lt = v->find('<');
    auto gt = v->rfind('>');
    std::string inner =
        lt != std::string::npos && gt != std::string::npos && gt > lt
            ? v->substr(lt + 1, gt - lt - 1)
            : *v;
    auto u = SipUri::parse(inner);
    return u ? u->user : "";
  }

  void set_body(Bytes b) {
    body = std::move(b);
    set_header("Content-Length", std::to_string(body.size()));
  }

  // Transcript name: method for requests, status code for responses.
  std::string wire_name() const {
    return is_request() ? method_name(method) : std::to_string(status_code);
  }

  static bool iequal(const std::string& a, const std::string& b) {
    return a.size() == b.size() &&
           std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
             return std::tolower(static_cast<unsigned char>(x)) ==
                    std::tolower(static_cast<unsigned char>(y));
           });
  }
};

// ---------------------------------------------------------------------------
// Framing

inline Bytes serialize_sip(const SipMessage& m) {
  std::string out;
  if (m.is_request()) {
    out += method_name(m.method);
    out += ' ';
    out += m.uri.str();
    out += " SIP/2.0\r\n";
  } else {
    out += "SIP/2.0 " + std::to_string(m.status_code) + " " + m.reason + "\r\n";
  }
  for (const auto& [n, v] : m.headers) out += n + ": " + v + "\r\n";
  out += "\r\n";
  Bytes b(out.begin(), out.end());
  b.insert(b.end(), m.body.begin(), m.body.end());
  return b;
}

inline SipMessage parse_sip(std::span<const std::uint8_t> raw) {
  if (raw.empty()) throw EmptyInput();
  const std::string text(raw.begin(), raw.end());

  auto head_end = text.find("\r\n\r\n");
  std::string head = head_end == std::string::npos ? text : text.substr(0, head_end);
  std::string body_text =
      head_end == std::string::npos ? std::string{} : text.substr(head_end + 4);

  std::vector<std::string> lines;
  std::size_t pos = 0;
  while (pos <= head.size()) {
    auto nl = head.find("\r\n", pos);
    if (nl == std::string::npos) {
      lines.push_back(head.substr(pos));
      break;
    }
    lines.push_back(head.substr(pos, nl - pos));
    pos = nl + 2;
  }
  if (lines.empty() || lines[0].empty()) throw MalformedStartLine("missing start line");

  SipMessage m;
  const std::string& start = lines[0];
  if (start.rfind("SIP/2.0 ", 0) == 0) {
    m.kind = SipMessage::Kind::Response;
    std::string rest = start.substr(8);
    auto sp = rest.find(' ');
    std::string code = sp == std::string::npos ? rest : rest.substr(0, sp);
    if (code.empty() ||
        !std::all_of(code.begin(), code.end(),
                     [](char c) { return std::isdigit(static_cast<unsigned char>(c)); }))
      throw MalformedStartLine("bad status line: " + start);
    m.status_code = std::atoi(code.c_str());
    m.reason = sp == std::string::npos ? "" : rest.substr(sp + 1);
  } else {
    auto sp1 = start.find(' ');
    auto sp2 = start.rfind(' ');
    if (sp1 == std::string::npos || sp2 == sp1 ||
        start.substr(sp2 + 1) != "SIP/2.0")
      throw MalformedStartLine("bad request line: " + start);
    auto method = parse_method(start.substr(0, sp1));
    if (!method) throw MalformedStartLine("unknown method in: " + start);
    auto uri = SipUri::parse(start.substr(sp1 + 1, sp2 - sp1 - 1));
    if (!uri) throw MalformedStartLine("bad request-URI in: " + start);
    m.kind = SipMessage::Kind::Request;
    m.method = *method;
    m.uri = *uri;
  }

  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    auto colon = lines[i].find(':');
    if (colon == std::string::npos)
      throw MalformedStartLine("header line without colon: " + lines[i]);
    std::string name = lines[i].substr(0, colon);
    std::string value = lines[i].substr(colon + 1);
    if (!value.empty() && value.front() == ' ') value.erase(0, 1);
    m.headers.emplace_back(std::move(name), std::move(value));
  }

  for (const char* required : {"Call-ID", "From", "To", "CSeq"})
    if (!m.header(required)) throw MissingHeader(required);

  if (auto cl = m.header("Content-Length")) {
    std::size_t n = static_cast<std::size_t>(std::atoll(cl->c_str()));
    if (n > body_text.size()) n = body_text.size();
    m.body.assign(body_text.begin(), body_text.begin() + static_cast<long>(n));
  } else {
    m.body.assign(body_text.begin(), body_text.end());
  }
  return m;
}

// ---------------------------------------------------------------------------
// Builders

inline SipMessage make_request(SipMethod method, SipUri uri,
                               const std::string& from_user,
                               const std::string& to_user,
                               const std::string& call_id, int cseq,
                               const std::string& via_host) {
  SipMessage m;
  m.kind = SipMessage::Kind::Request;
  m.method = method;
  m.uri = uri;
  m.headers = {
      {"Via", "SIP/2.0/UDP " + via_host},
      {"From", "<sip:" + from_user + "@" + via_host + ">"},
      {"To", "<" + uri.str() + ">"},
      {"Call-ID", call_id},
      {"CSeq", std::to_string(cseq) + " " + method_name(method)},
      {"Content-Length", "0"},
  };
  return m;
}

inline SipMessage make_invite(const std::string& from_user,
                              const std::string& to_user, Ipv4 to_host,
                              const std::string& call_id,
                              const std::string& via_host = "0.0.0.0") {
  SipUri uri{to_user, to_host.str(), 5060};
  return make_request(SipMethod::Invite, uri, from_user, to_user, call_id, 1,
                      via_host);
}

// Response mirroring the dialog headers of the request it answers.
inline SipMessage make_response(int code, const std::string& reason,
                                const SipMessage& request) {
  SipMessage m;
  m.kind = SipMessage::Kind::Response;
  m.status_code = code;
  m.reason = reason;
  for (const char* h : {"Via", "From", "To", "Call-ID", "CSeq"})
    if (auto v = request.header(h)) m.headers.emplace_back(h, *v);
  m.headers.emplace_back("Content-Length", "0");
  return m;
}

inline const char* reason_for(int code) {
  switch (code) {
    case 100: return "Trying";
    case 180: return "Ringing";
    case 200: return "OK";
    case 403: return "Forbidden";
    case 404: return "Not Found";
    case 480: return "Temporarily Unavailable";
    default: return "Unknown";
  }
}

// ---------------------------------------------------------------------------
// Dialog state machine

enum class DialogRole { Caller, Callee, Server };
enum class CallPhase { Idle, InviteSent, Trying, Ringing, Established, Terminated };

inline const char* phase_name(CallPhase p) {
  switch (p) {
    case CallPhase::Idle: return "Idle";
    case CallPhase::InviteSent: return "InviteSent";
    case CallPhase::Trying: return "Trying";
    case CallPhase::Ringing: return "Ringing";
    case CallPhase::Established: return "Established";
    case CallPhase::Terminated: return "Terminated";
  }
  return "?";
}

struct DialogState {
  std::string call_id;
  DialogRole role = DialogRole::Caller;
  CallPhase state = CallPhase::Idle;
  bool answered = false;  // a 200 OK has passed through this endpoint

  friend bool operator==(const DialogState&, const DialogState&) = default;
};

enum class Direction { Inbound, Outbound };

struct StepResult {
  DialogState next;
  // Messages this endpoint should put on the wire as a consequence.
  // For Outbound steps this includes the stepped message itself.
  std::vector<SipMessage> emit;
};

namespace detail {

[[noreturn]] inline void bad_transition(const DialogState& d, const SipMessage& m,
                                        Direction dir) {
  throw InvalidTransition(std::string(phase_name(d.state)) + " cannot take " +
                          (dir == Direction::Inbound ? "inbound " : "outbound ") +
                          m.wire_name());
}

inline StepResult caller_step(const DialogState& d, const SipMessage& m,
                              Direction dir) {
  DialogState n = d;
  StepResult r{n, {}};
  const bool in = dir == Direction::Inbound;
  switch (d.state) {
    case CallPhase::Idle:
      if (!in && m.is_request() && m.method == SipMethod::Invite) {
        r.next.state = CallPhase::InviteSent;
        r.next.call_id = m.call_id();
        r.emit.push_back(m);
        return r;
      }
      break;
    case CallPhase::InviteSent:
      if (in && m.is_response() && m.status_code == 100) {
        r.next.state = CallPhase::Trying;
        return r;
      }
      if (in && m.is_response() && m.status_code == 180) {
        r.next.state = CallPhase::Ringing;
        return r;
      }
      if (in && m.is_response() && m.status_code >= 400) {
        r.next.state = CallPhase::Terminated;
        return r;
      }
      break;
    case CallPhase::Trying:
      if (in && m.is_response() && m.status_code == 100) return r;  // duplicate
      if (in && m.is_response() && m.status_code == 180) {
        r.next.state = CallPhase::Ringing;
        return r;
      }
      if (in && m.is_response() && m.status_code == 200) {
        r.next.state = CallPhase::Established;
        r.next.answered = true;
        return r;  // caller sends ACK; endpoint code builds it with addresses
      }
      if (in && m.is_response() && m.status_code >= 400) {
        r.next.state = CallPhase::Terminated;
        return r;
      }
      break;
    case CallPhase::Ringing:
      if (in && m.is_response() && (m.status_code == 100 || m.status_code == 180))
        return r;  // duplicate
      if (in && m.is_response() && m.status_code == 200) {
        r.next.state = CallPhase::Established;
        r.next.answered = true;
        return r;
      }
      if (in && m.is_response() && m.status_code >= 400) {
        r.next.state = CallPhase::Terminated;
        return r;
      }
      break;
    case CallPhase::Established:
      if (in && m.is_response() && m.status_code == 200) return r;  // duplicate
      if (!in && m.is_request() && m.method == SipMethod::Ack) {
        r.emit.push_back(m);
        return r;
      }
      if (m.is_request() && m.method == SipMethod::Bye) {
        r.next.state = CallPhase::Terminated;
        if (!in) r.emit.push_back(m);
        return r;
      }
      break;
    case CallPhase::Terminated:
      if (in) return r;  // absorbing: late packets ignored
      break;
  }
  bad_transition(d, m, dir);
}

inline StepResult callee_step(const DialogState& d, const SipMessage& m,
                              Direction dir) {
  DialogState n = d;
  StepResult r{n, {}};
  const bool in = dir == Direction::Inbound;
  switch (d.state) {
    case CallPhase::Idle:
      if (in && m.is_request() && m.method == SipMethod::Invite) {
        r.next.state = CallPhase::Trying;
        r.next.call_id = m.call_id();
        r.emit.push_back(make_response(100, reason_for(100), m));
        return r;
      }
      break;
    case CallPhase::Trying:
      if (in && m.is_request() && m.method == SipMethod::Invite) return r;  // dup
      if (!in && m.is_response() && m.status_code == 180) {
        r.next.state = CallPhase::Ringing;
        r.emit.push_back(m);
        return r;
      }
      break;
    case CallPhase::Ringing:
      if (in && m.is_request() && m.method == SipMethod::Invite) return r;  // dup
      if (!in && m.is_response() && m.status_code == 180) return r;         // dup
      if (!in && m.is_response() && m.status_code == 200) {
        r.next.answered = true;
        r.emit.push_back(m);  // stays Ringing until the ACK arrives
        return r;
      }
      if (in && m.is_request() && m.method == SipMethod::Ack) {
        if (!d.answered) bad_transition(d, m, dir);
        r.next.state = CallPhase::Established;
        return r;
      }
      if (m.is_request() && m.method == SipMethod::Bye) {
        r.next.state = CallPhase::Terminated;
        if (!in) r.emit.push_back(m);
        return r;
      }
      break;
    case CallPhase::Established:
      if (in && m.is_request() && m.method == SipMethod::Ack) return r;  // dup
      if (m.is_request() && m.method == SipMethod::Bye) {
        r.next.state = CallPhase::Terminated;
        if (!in) r.emit.push_back(m);
        return r;
      }
      break;
    case CallPhase::Terminated:
      if (in) return r;
      break;
    default:
      break;
  }
  bad_transition(d, m, dir);
}

inline StepResult server_step(const DialogState& d, const SipMessage& m,
                              Direction dir) {
  DialogState n = d;
  StepResult r{n, {}};
  const bool in = dir == Direction::Inbound;
  switch (d.state) {
    case CallPhase::Idle:
      if (in && m.is_request() && m.method == SipMethod::Invite) {
        r.next.state = CallPhase::Trying;
        r.next.call_id = m.call_id();
        r.emit.push_back(make_response(100, reason_for(100), m));  // to caller
        r.emit.push_back(m);                                       // to callee
        return r;
      }
      break;
    case CallPhase::Trying:
      if (in && m.is_response() && m.status_code == 100) return r;  // absorbed
      if (in && m.is_request() && m.method == SipMethod::Invite) return r;  // dup
      if (in && m.is_response() && m.status_code == 180) {
        r.next.state = CallPhase::Ringing;
        r.emit.push_back(m);  // relay to caller
        return r;
      }
      if (in && m.is_response() && m.status_code == 200) {
        r.next.state = CallPhase::Established;
        r.next.answered = true;
        r.emit.push_back(m);
        return r;
      }
      break;
    case CallPhase::Ringing:
      if (in && m.is_response() && (m.status_code == 100 || m.status_code == 180))
        return r;  // dup
      if (in && m.is_request() && m.method == SipMethod::Invite) return r;  // dup
      if (in && m.is_response() && m.status_code == 200) {
        r.next.state = CallPhase::Established;
        r.next.answered = true;
        r.emit.push_back(m);
        return r;
      }
      break;
    case CallPhase::Established:
      if (in && m.is_response() && m.status_code == 200) return r;  // dup
      if (in && m.is_request() && m.method == SipMethod::Bye) {
        r.next.state = CallPhase::Terminated;
        r.emit.push_back(m);  // forward to the other party
        return r;
      }
      break;
    case CallPhase::Terminated:
      if (in) return r;
      break;
    default:
      break;
  }
  bad_transition(d, m, dir);
}

}  // namespace detail

inline StepResult dialog_step(const DialogState& d, const SipMessage& m,
                              Direction dir) {
  if (d.state != CallPhase::Idle && !d.call_id.empty() &&
      m.call_id() != d.call_id)
    throw InvalidTransition("message Call-ID does not match dialog");
  switch (d.role) {
    case DialogRole::Caller: return detail::caller_step(d, m, dir);
    case DialogRole::Callee: return detail::callee_step(d, m, dir);
    case DialogRole::Server: return detail::server_step(d, m, dir);
  }
  throw InvalidTransition("unknown role");
}

}  // namespace phonejack
