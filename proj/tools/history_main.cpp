#include <unistd.h>

#include <condition_variable>
#include <cstdio>
#include <mutex>
#include <string>

#include <CLI11.hpp>

#include "ephemyarn/history.hpp"
#include "ephemyarn/protocol.hpp"
#include "ephemyarn/util.hpp"

using namespace ephemyarn;

int main(int argc, char** argv) {
  CLI::App app{"ephemyarn job history daemon"};
  std::string staging;
  std::string pidfile;
  int port = 0;
  app.add_option("--staging", staging, "shared staging directory")->required();
  app.add_option("--port", port, "listen port (0 picks a free one)");
  app.add_option("--pidfile", pidfile, "write the daemon pid here");
  CLI11_PARSE(app, argc, argv);

  try {
    HistoryStore store(staging + "/history");

    std::mutex mu;
    std::condition_variable cv;
    bool shutdown = false;

    MessageServer server(port, [&](const json& msg) -> json {
      const std::string type = msg.value("type", "");
      if (type == "QueryHistory") {
        json reply = ok_reply("QueryHistoryReply");
        if (msg.contains("app_id")) {
          reply["record"] = store.query(msg["app_id"].get<std::string>()).to_json();
        } else {
          json records = json::array();
          for (const auto& r : store.list()) records.push_back(r.to_json());
          reply["records"] = std::move(records);
        }
        return reply;
      }
      if (type == "Ping") return ok_reply("Pong");
      if (type == "Shutdown") {
        {
          std::lock_guard<std::mutex> lock(mu);
          shutdown = true;
        }
        cv.notify_all();
        return ok_reply("ShutdownReply");
      }
      throw Error(ErrorCode::Protocol, "unknown message type '" + type + "'");
    });

    server.start();
    if (!pidfile.empty()) write_file(pidfile, std::to_string(getpid()) + "\n");
    std::fprintf(stderr, "history service listening on port %d\n", server.port());

    std::unique_lock<std::mutex> lock(mu);
    cv.wait(lock, [&] { return shutdown; });
    lock.unlock();
    server.stop();
  } catch (const std::exception& e) {
    std::fprintf(stderr, "ephemyarn-history: %s\n", e.what());
    return 1;
  }
  return 0;
}
