#pragma once

// Line-oriented scenario log. One event per line:
//   <virtual_time> <host> <EVENT> <details>
// Events: REG RING CRASH REBOOT CALL_START CALL_END DROP
//         FILTER_DROP TUNNEL_TX TUNNEL_RX AUTH_FAIL

#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

namespace phonejack {

class ScenarioLog {
 public:
  void append(std::uint64_t t_micros, const std::string& host,
              const std::string& event, const std::string& details) {
    std::ostringstream os;
    os << t_micros << ' ' << host << ' ' << event;
    if (!details.empty()) os << ' ' << details;
    lines_.push_back(os.str());
  }

  const std::vector<std::string>& lines() const { return lines_; }

  std::string text() const {
    std::string out;
    for (const auto& l : lines_) {
      out += l;
      out += '\n';
    }
    return out;
  }

  std::size_t count(const std::string& event) const {
    std::size_t n = 0;
    for (const auto& l : lines_)
      if (line_event(l) == event) ++n;
    return n;
  }

  std::size_t count(const std::string& event, const std::string& host) const {
    std::size_t n = 0;
    for (const auto& l : lines_)
      if (line_event(l) == event && line_host(l) == host) ++n;
    return n;
  }

  // Event names, in order, as logged for one host.
  std::vector<std::string> events_for(const std::string& host) const {
    std::vector<std::string> out;
    for (const auto& l : lines_)
      if (line_host(l) == host) out.push_back(line_event(l));
    return out;
  }

  static std::string line_host(const std::string& line) {
    auto a = line.find(' ');
    if (a == std::string::npos) return {};
    auto b = line.find(' ', a + 1);
    return line.substr(a + 1, b == std::string::npos ? b : b - a - 1);
  }

  static std::string line_event(const std::string& line) {
    auto a = line.find(' ');
    if (a == std::string::npos) return {};
    auto b = line.find(' ', a + 1);
    if (b == std::string::npos) return {};
    auto c = line.find(' ', b + 1);
    return line.substr(b + 1, c == std::string::npos ? c : c - b - 1);
  }

  void clear() { lines_.clear(); }

 private:
  std::vector<std::string> lines_;
};

}  // namespace phonejack
