// Test child for the external objective protocol. Mode is the first argument:
//   echo      y = x[0], cost = 0.5
//   nocost    y = x[0], no cost field
//   logs      like echo, with log lines before each response
//   malformed a broken JSON line
//   badid     wrong id
//   noy       missing y
//   hang      never answers
//   die       exits with status 3 without answering
#include <json.hpp>

#include <chrono>
#include <iostream>
#include <string>
#include <thread>

int main(int argc, char** argv) {
    const std::string mode = argc > 1 ? argv[1] : "echo";
    std::string line;
    while (std::getline(std::cin, line)) {
        const auto req = nlohmann::json::parse(line);
        const auto id = req["id"].get<long long>();
        const double x0 = req["x"][0].get<double>();
        if (mode == "hang") {
            std::this_thread::sleep_for(std::chrono::hours(1));
        } else if (mode == "die") {
            std::cerr << "stub: giving up" << std::endl;
            return 3;
        } else if (mode == "malformed") {
            std::cout << "{\"id\": " << id << ", \"y\": oops" << std::endl;
        } else if (mode == "badid") {
            std::cout << nlohmann::json{{"id", id + 100}, {"y", x0}}.dump() << std::endl;
        } else if (mode == "noy") {
            std::cout << nlohmann::json{{"id", id}}.dump() << std::endl;
        } else if (mode == "nocost") {
            std::cout << nlohmann::json{{"id", id}, {"y", x0}}.dump() << std::endl;
        } else {
            if (mode == "logs") std::cout << "loading simulator...\n  step 1 done" << std::endl;
            std::cout << nlohmann::json{{"id", id}, {"y", x0}, {"cost", 0.5}}.dump() << std::endl;
        }
    }
    return 0;
}
