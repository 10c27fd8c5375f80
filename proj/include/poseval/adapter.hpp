#pragma once

#include "poseval/grasp_trial.hpp"

#include <chrono>
#include <memory>
#include <mutex>
#include <string>

namespace poseval {

// One JSON object per line, request and response.
std::string adapter_request_json(const std::string& trial_id, const TrialSpec& spec, const GripperModel& gripper,
                                 const SuccessCriterion& criterion);
// Throws ProtocolError with an excerpt of the offending payload.
TrialOutcome parse_adapter_response(const std::string& line, const std::string& expected_trial_id);

// Byte stream carrying the adapter protocol.
class LineChannel {
 public:
  virtual ~LineChannel() = default;
  // Both throw Error(OutcomeModelUnavailable) when the peer is gone or silent.
  virtual void write_line(const std::string& line) = 0;
  virtual std::string read_line(std::chrono::milliseconds timeout) = 0;
};

// Endpoint syntax: "exec:<shell command>" spawns the simulator and talks over
// its stdin/stdout; "tcp:<host>:<port>" connects to a running one.
std::unique_ptr<LineChannel> open_channel(const std::string& endpoint);

// Requests are serialized over a single channel; the channel is opened on
// first use and reopened after a failure.
class ExternalOutcomeModel final : public OutcomeModel {
 public:
  explicit ExternalOutcomeModel(std::string endpoint,
                                std::chrono::milliseconds timeout = std::chrono::milliseconds(120000));

  TrialOutcome evaluate(const std::string& trial_id, const TrialSpec& spec, const GripperModel& gripper,
                        const SuccessCriterion& criterion) override;

  const std::string& endpoint() const noexcept { return endpoint_; }

 private:
  std::string endpoint_;
  std::chrono::milliseconds timeout_;
  std::mutex mutex_;
  std::unique_ptr<LineChannel> channel_;
};

}  // namespace poseval
