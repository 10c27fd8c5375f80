// Minimal external simulator for protocol tests. Reads one JSON request per
// line and answers according to the mode:
//   success | slip | malformed | wrong_id | mismatch | exit_after_one | silent
//   distance  (success, final_distance_mm echoes the requested target)

#include "json.hpp"

#include <iostream>
#include <string>
#include <thread>

int main(int argc, char** argv) {
  const std::string mode = argc > 1 ? argv[1] : "success";
  std::string line;
  int served = 0;
  while (std::getline(std::cin, line)) {
    if (mode == "exit_after_one" && served == 1) return 0;
    if (mode == "silent") {
      std::this_thread::sleep_for(std::chrono::seconds(5));
      return 0;
    }
    const auto req = nlohmann::json::parse(line);
    const std::string id = req.at("trial_id").get<std::string>();
    nlohmann::json resp{{"trial_id", id}, {"success", true}, {"failure_stage", "none"}, {"final_distance_mm", 42.5}};
    if (mode == "slip") {
      resp["success"] = false;
      resp["failure_stage"] = "slip_or_eject";
      resp["final_distance_mm"] = nullptr;
    } else if (mode == "wrong_id") {
      resp["trial_id"] = id + "-other";
    } else if (mode == "mismatch") {
      resp["success"] = false;
    } else if (mode == "distance") {
      resp["final_distance_mm"] = req.at("target_hand_object_distance");
    }
    if (mode == "malformed") {
      std::cout << "{\"trial_id\": \"" << id << "\", \"success\": tru" << std::endl;
    } else {
      std::cout << resp.dump() << std::endl;
    }
    ++served;
  }
  return 0;
}
