#pragma once

#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cstring>
#include <string>
#include <vector>

#include <json.hpp>

#include "safekv/detection.hpp"

namespace safekv {

/// External detector over a subprocess pipe: one JSON object per line on the
/// child's stdin ({"block_id", "text", "history": [...]}) and one per line on
/// its stdout ({"sensitive", "score", "categories": [...]}). A request that
/// gets no response within the timeout throws DetectorUnavailable; the caller
/// falls back to a conservative Private label.
class SubprocessDetectorClient final : public ExternalDetectorClient {
 public:
  explicit SubprocessDetectorClient(std::vector<std::string> argv, double timeout_ms = 2000.0)
      : timeout_ms_(timeout_ms) {
    if (argv.empty()) throw ConfigError("external detector: empty argv");
    int to_child[2], from_child[2];
    if (pipe(to_child) != 0 || pipe(from_child) != 0)
      throw Error("external detector: pipe failed");
    pid_ = fork();
    if (pid_ < 0) throw Error("external detector: fork failed");
    if (pid_ == 0) {
      dup2(to_child[0], STDIN_FILENO);
      dup2(from_child[1], STDOUT_FILENO);
      close(to_child[0]);
      close(to_child[1]);
      close(from_child[0]);
      close(from_child[1]);
      std::vector<char*> cargv;
      for (auto& a : argv) cargv.push_back(const_cast<char*>(a.c_str()));
      cargv.push_back(nullptr);
      execvp(cargv[0], cargv.data());
      _exit(127);
    }
    close(to_child[0]);
    close(from_child[1]);
    in_fd_ = to_child[1];
    out_fd_ = from_child[0];
  }

  ~SubprocessDetectorClient() override {
    if (in_fd_ >= 0) close(in_fd_);
    if (out_fd_ >= 0) close(out_fd_);
    if (pid_ > 0) {
      kill(pid_, SIGTERM);
      int status = 0;
      waitpid(pid_, &status, 0);
    }
  }

  Reply request(uint64_t block_id, std::string_view text,
                const std::vector<std::string>& history) override {
    nlohmann::json req{{"block_id", block_id}, {"text", std::string(text)}, {"history", history}};
    std::string line = req.dump();
    line.push_back('\n');
    if (!write_all(line)) throw DetectorUnavailable("external detector: write failed");
    std::string resp = read_line();
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(resp);
    } catch (const nlohmann::json::exception& e) {
      throw DetectorUnavailable(std::string("external detector: bad response: ") + e.what());
    }
    Reply r;
    r.sensitive = j.value("sensitive", false);
    r.score = j.value("score", 0.0);
    if (j.contains("categories"))
      for (const auto& c : j["categories"]) r.categories.push_back(c.get<std::string>());
    return r;
  }

 private:
  bool write_all(const std::string& data) {
    size_t off = 0;
    while (off < data.size()) {
      ssize_t n = write(in_fd_, data.data() + off, data.size() - off);
      if (n <= 0) return false;
      off += static_cast<size_t>(n);
    }
    return true;
  }

  std::string read_line() {
    for (;;) {
      auto nl = rbuf_.find('\n');
      if (nl != std::string::npos) {
        std::string line = rbuf_.substr(0, nl);
        rbuf_.erase(0, nl + 1);
        return line;
      }
      struct pollfd pfd{out_fd_, POLLIN, 0};
      int rc = poll(&pfd, 1, static_cast<int>(timeout_ms_));
      if (rc <= 0) throw DetectorUnavailable("external detector: timeout");
      char buf[4096];
      ssize_t n = read(out_fd_, buf, sizeof(buf));
      if (n <= 0) throw DetectorUnavailable("external detector: closed pipe");
      rbuf_.append(buf, static_cast<size_t>(n));
    }
  }

  pid_t pid_ = -1;
  int in_fd_ = -1;
  int out_fd_ = -1;
  double timeout_ms_;
  std::string rbuf_;
};

}  // namespace safekv
