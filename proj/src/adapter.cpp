#include "poseval/adapter.hpp"

#include "poseval/error.hpp"
#include "poseval/text_format.hpp"

#include "json.hpp"

#include <cerrno>
#include <csignal>
#include <cstring>
#include <limits>

#include <fcntl.h>
#include <netdb.h>
#include <poll.h>
#include <sys/socket.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

namespace poseval {

using nlohmann::ordered_json;

namespace {

ordered_json pose_json(const RigidTransform& p) {
  ordered_json r = ordered_json::array(), t = ordered_json::array();
  for (int i = 0; i < 9; ++i) r.push_back(p.rotation()(i / 3, i % 3));
  for (int i = 0; i < 3; ++i) t.push_back(p.translation()[i]);
  return {{"R", r}, {"t", t}};
}

ordered_json gripper_json(const GripperModel& g) {
  ordered_json j{{"kind", std::string(to_string(g.kind))}, {"finger_depth", g.finger_depth},
                 {"friction_with_object", g.friction_with_object}};
  if (g.kind == GripperKind::parallel) {
    j["stroke"] = g.stroke;
    j["finger_length"] = g.finger_length;
    j["pad_width"] = g.pad_width;
    j["grip_force_n"] = g.grip_force_n;
  } else {
    j["finger_span"] = g.finger_span;
    j["rotation_tolerance"] = g.rotation_tolerance;
  }
  return j;
}

std::string excerpt(const std::string& payload) {
  constexpr std::size_t kMax = 200;
  return payload.size() <= kMax ? payload : payload.substr(0, kMax) + "...";
}

[[noreturn]] void protocol_fail(const std::string& what, const std::string& payload) {
  throw Error(ErrorKind::ProtocolError, what + " in adapter response: " + excerpt(payload));
}

[[noreturn]] void unavailable(const std::string& what) {
  throw Error(ErrorKind::OutcomeModelUnavailable, what);
}

// Shared buffered line reading over a pollable descriptor.
class FdLineReader {
 public:
  std::string read_line(int fd, std::chrono::milliseconds timeout, const std::string& peer) {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    while (true) {
      if (const auto nl = buffer_.find('\n'); nl != std::string::npos) {
        std::string line = buffer_.substr(0, nl);
        buffer_.erase(0, nl + 1);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        return line;
      }
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
      if (left.count() <= 0) unavailable(peer + ": no response within timeout");
      pollfd pfd{fd, POLLIN, 0};
      const int rc = ::poll(&pfd, 1, static_cast<int>(std::min<long long>(left.count(), std::numeric_limits<int>::max())));
      if (rc < 0) {
        if (errno == EINTR) continue;
        unavailable(peer + ": poll failed: " + std::strerror(errno));
      }
      if (rc == 0) continue;
      char chunk[4096];
      const ssize_t n = ::read(fd, chunk, sizeof(chunk));
      if (n < 0) {
        if (errno == EINTR) continue;
        unavailable(peer + ": read failed: " + std::strerror(errno));
      }
      if (n == 0) unavailable(peer + ": connection closed");
      buffer_.append(chunk, static_cast<std::size_t>(n));
    }
  }

 private:
  std::string buffer_;
};

void write_all(int fd, const std::string& data, const std::string& peer, bool socket) {
  std::size_t off = 0;
  while (off < data.size()) {
    const ssize_t n = socket ? ::send(fd, data.data() + off, data.size() - off, MSG_NOSIGNAL)
                             : ::write(fd, data.data() + off, data.size() - off);
    if (n < 0) {
      if (errno == EINTR) continue;
      unavailable(peer + ": write failed: " + std::strerror(errno));
    }
    off += static_cast<std::size_t>(n);
  }
}

class ProcessChannel final : public LineChannel {
 public:
  explicit ProcessChannel(const std::string& command) : peer_("exec:" + command) {
    // A simulator that exits early must surface as an error, not a signal.
    std::signal(SIGPIPE, SIG_IGN);
    int to_child[2], from_child[2];
    if (::pipe(to_child) != 0) unavailable(peer_ + ": pipe failed");
    if (::pipe(from_child) != 0) {
      ::close(to_child[0]);
      ::close(to_child[1]);
      unavailable(peer_ + ": pipe failed");
    }
    pid_ = ::fork();
    if (pid_ < 0) unavailable(peer_ + ": fork failed");
    if (pid_ == 0) {
      ::dup2(to_child[0], STDIN_FILENO);
      ::dup2(from_child[1], STDOUT_FILENO);
      ::close(to_child[0]);
      ::close(to_child[1]);
      ::close(from_child[0]);
      ::close(from_child[1]);
      ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
      ::_exit(127);
    }
    ::close(to_child[0]);
    ::close(from_child[1]);
    write_fd_ = to_child[1];
    read_fd_ = from_child[0];
    ::fcntl(write_fd_, F_SETFD, FD_CLOEXEC);
    ::fcntl(read_fd_, F_SETFD, FD_CLOEXEC);
  }

  ~ProcessChannel() override {
    if (write_fd_ >= 0) ::close(write_fd_);
    if (read_fd_ >= 0) ::close(read_fd_);
    if (pid_ > 0) {
      int status = 0;
      // Closing stdin asks the simulator to exit; terminate it if it does not.
      for (int i = 0; i < 50; ++i) {
        if (::waitpid(pid_, &status, WNOHANG) == pid_) return;
        ::usleep(10000);
      }
      ::kill(pid_, SIGTERM);
      ::waitpid(pid_, &status, 0);
    }
  }

  void write_line(const std::string& line) override { write_all(write_fd_, line + "\n", peer_, false); }
  std::string read_line(std::chrono::milliseconds timeout) override {
    return reader_.read_line(read_fd_, timeout, peer_);
  }

 private:
  std::string peer_;
  pid_t pid_ = -1;
  int write_fd_ = -1;
  int read_fd_ = -1;
  FdLineReader reader_;
};

class SocketChannel final : public LineChannel {
 public:
  SocketChannel(const std::string& host, const std::string& port) : peer_("tcp:" + host + ":" + port) {
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    if (const int rc = ::getaddrinfo(host.c_str(), port.c_str(), &hints, &res); rc != 0) {
      unavailable(peer_ + ": " + ::gai_strerror(rc));
    }
    for (addrinfo* ai = res; ai; ai = ai->ai_next) {
      fd_ = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
      if (fd_ < 0) continue;
      if (::connect(fd_, ai->ai_addr, ai->ai_addrlen) == 0) break;
      ::close(fd_);
      fd_ = -1;
    }
    ::freeaddrinfo(res);
    if (fd_ < 0) unavailable(peer_ + ": connection refused");
  }

  ~SocketChannel() override {
    if (fd_ >= 0) ::close(fd_);
  }

  void write_line(const std::string& line) override { write_all(fd_, line + "\n", peer_, true); }
  std::string read_line(std::chrono::milliseconds timeout) override { return reader_.read_line(fd_, timeout, peer_); }

 private:
  std::string peer_;
  int fd_ = -1;
  FdLineReader reader_;
};

}  // namespace

std::string adapter_request_json(const std::string& trial_id, const TrialSpec& spec, const GripperModel& gripper,
                                 const SuccessCriterion& criterion) {
  const auto& off = spec.ref.approach_offset;
  ordered_json j{
      {"trial_id", trial_id},
      {"object_id", spec.object ? spec.object->object_id : spec.ref.object_id},
      {"mesh_path", spec.object ? spec.object->mesh_path : std::string()},
      {"object_pose_sim", pose_json(spec.object_pose_sim)},
      {"gripper", gripper_json(gripper)},
      {"plan_pose", pose_json(spec.plan)},
      {"stages", {{"approach_offset", {off.x(), off.y(), off.z()}}, {"lift_height", spec.ref.lift_height}}},
      {"target_hand_object_distance", spec.ref.target_hand_object_distance},
      {"success_criterion", {{"tolerance_mm", criterion.tolerance_mm}, {"hold_s", criterion.hold_s}}},
  };
  return j.dump();
}

TrialOutcome parse_adapter_response(const std::string& line, const std::string& expected_trial_id) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error&) {
    protocol_fail("malformed JSON", line);
  }
  if (!j.is_object()) protocol_fail("expected a JSON object", line);
  if (!j.contains("trial_id") || !j["trial_id"].is_string()) protocol_fail("missing trial_id", line);
  if (j["trial_id"].get<std::string>() != expected_trial_id) {
    protocol_fail("trial_id mismatch (expected " + expected_trial_id + ")", line);
  }
  if (!j.contains("success") || !j["success"].is_boolean()) protocol_fail("missing boolean success", line);
  if (!j.contains("failure_stage") || !j["failure_stage"].is_string()) protocol_fail("missing failure_stage", line);
  const auto stage = parse_failure_stage(j["failure_stage"].get<std::string>());
  if (!stage || *stage == FailureStage::missing_estimate || *stage == FailureStage::indeterminate) {
    protocol_fail("unknown failure_stage", line);
  }
  TrialOutcome out;
  out.success = j["success"].get<bool>();
  out.stage = *stage;
  if (out.success != (out.stage == FailureStage::none)) protocol_fail("success and failure_stage disagree", line);
  if (!j.contains("final_distance_mm")) protocol_fail("missing final_distance_mm", line);
  if (j["final_distance_mm"].is_number()) {
    out.final_distance_mm = j["final_distance_mm"].get<double>();
  } else if (j["final_distance_mm"].is_null()) {
    out.final_distance_mm = std::numeric_limits<double>::quiet_NaN();
  } else {
    protocol_fail("final_distance_mm must be a number or null", line);
  }
  out.detail = "external";
  return out;
}

std::unique_ptr<LineChannel> open_channel(const std::string& endpoint) {
  if (endpoint.starts_with("exec:")) {
    const std::string cmd = endpoint.substr(5);
    if (trim(cmd).empty()) throw Error(ErrorKind::ConfigError, "outcome_model: empty exec command");
    return std::make_unique<ProcessChannel>(cmd);
  }
  if (endpoint.starts_with("tcp:")) {
    const std::string rest = endpoint.substr(4);
    const auto colon = rest.rfind(':');
    if (colon == std::string::npos || colon == 0 || colon + 1 == rest.size()) {
      throw Error(ErrorKind::ConfigError, "outcome_model: expected tcp:<host>:<port>, got '" + endpoint + "'");
    }
    return std::make_unique<SocketChannel>(rest.substr(0, colon), rest.substr(colon + 1));
  }
  throw Error(ErrorKind::ConfigError, "outcome_model: unsupported endpoint '" + endpoint + "'");
}

ExternalOutcomeModel::ExternalOutcomeModel(std::string endpoint, std::chrono::milliseconds timeout)
    : endpoint_(std::move(endpoint)), timeout_(timeout) {}

TrialOutcome ExternalOutcomeModel::evaluate(const std::string& trial_id, const TrialSpec& spec,
                                            const GripperModel& gripper, const SuccessCriterion& criterion) {
  const std::string request = adapter_request_json(trial_id, spec, gripper, criterion);
  std::lock_guard lock(mutex_);
  try {
    if (!channel_) channel_ = open_channel(endpoint_);
    channel_->write_line(request);
    const std::string line = channel_->read_line(timeout_);
    return parse_adapter_response(line, trial_id);
  } catch (const Error& e) {
    // The stream position is unknown after any failure; start fresh next time.
    channel_.reset();
    throw;
  }
}

}  // namespace poseval
