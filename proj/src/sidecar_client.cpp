#include "revrec/sidecar_client.hpp"

#include <nlohmann/json.hpp>

#include <netdb.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <map>

namespace revrec::embedding {

namespace {

using nlohmann::json;

[[noreturn]] void unavailable(const std::string& what) { throw Error(ErrorCode::kSidecarUnavailable, what); }

// Buffered line I/O over a pair of file descriptors.
class FdChannel : public LineChannel {
 public:
  FdChannel(int read_fd, int write_fd, std::string label) : read_fd_(read_fd), write_fd_(write_fd), label_(std::move(label)) {}

  ~FdChannel() override {
    if (write_fd_ >= 0 && write_fd_ != read_fd_) ::close(write_fd_);
    if (read_fd_ >= 0) ::close(read_fd_);
  }

  FdChannel(const FdChannel&) = delete;
  FdChannel& operator=(const FdChannel&) = delete;

  void write_line(const std::string& line) override {
    std::string data = line + "\n";
    std::size_t off = 0;
    while (off < data.size()) {
      const ssize_t n = send_or_write(write_fd_, data.data() + off, data.size() - off);
      if (n < 0) {
        if (errno == EINTR) continue;
        unavailable("write to " + label_ + " failed: " + std::strerror(errno));
      }
      off += static_cast<std::size_t>(n);
    }
  }

  std::optional<std::string> read_line() override {
    while (true) {
      const auto nl = buffer_.find('\n');
      if (nl != std::string::npos) {
        std::string line = buffer_.substr(0, nl);
        buffer_.erase(0, nl + 1);
        return line;
      }
      char chunk[65536];
      const ssize_t n = ::read(read_fd_, chunk, sizeof(chunk));
      if (n < 0) {
        if (errno == EINTR) continue;
        unavailable("read from " + label_ + " failed: " + std::strerror(errno));
      }
      if (n == 0) return std::nullopt;
      buffer_.append(chunk, static_cast<std::size_t>(n));
    }
  }

 protected:
  static ssize_t send_or_write(int fd, const char* data, std::size_t len) {
    const ssize_t n = ::send(fd, data, len, MSG_NOSIGNAL);
    if (n < 0 && errno == ENOTSOCK) return ::write(fd, data, len);
    return n;
  }

  int read_fd_;
  int write_fd_;
  std::string label_;
  std::string buffer_;
};

class ProcessChannel final : public FdChannel {
 public:
  ProcessChannel(int read_fd, int write_fd, pid_t pid, std::string label)
      : FdChannel(read_fd, write_fd, std::move(label)), pid_(pid) {}

  ~ProcessChannel() override {
    ::close(write_fd_);
    write_fd_ = -1;
    int status = 0;
    ::waitpid(pid_, &status, 0);
  }

 private:
  pid_t pid_;
};

std::unique_ptr<LineChannel> connect_tcp(const std::string& endpoint) {
  const auto colon = endpoint.rfind(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 == endpoint.size()) {
    unavailable("endpoint '" + endpoint + "' is not host:port");
  }
  const std::string host = endpoint.substr(0, colon);
  const std::string port = endpoint.substr(colon + 1);
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* found = nullptr;
  if (const int rc = ::getaddrinfo(host.c_str(), port.c_str(), &hints, &found); rc != 0) {
    unavailable("cannot resolve " + endpoint + ": " + ::gai_strerror(rc));
  }
  int fd = -1;
  for (addrinfo* ai = found; ai; ai = ai->ai_next) {
    fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
    if (fd < 0) continue;
    if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) break;
    ::close(fd);
    fd = -1;
  }
  ::freeaddrinfo(found);
  if (fd < 0) unavailable("cannot connect to " + endpoint);
  return std::make_unique<FdChannel>(fd, fd, endpoint);
}

std::unique_ptr<LineChannel> spawn_stdio(const std::string& command) {
  int to_child[2];
  int from_child[2];
  if (::pipe(to_child) != 0) unavailable("pipe: " + std::string(std::strerror(errno)));
  if (::pipe(from_child) != 0) {
    ::close(to_child[0]);
    ::close(to_child[1]);
    unavailable("pipe: " + std::string(std::strerror(errno)));
  }
  const pid_t pid = ::fork();
  if (pid < 0) unavailable("fork: " + std::string(std::strerror(errno)));
  if (pid == 0) {
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
  return std::make_unique<ProcessChannel>(from_child[0], to_child[1], pid, "stdio:" + command);
}

}  // namespace

std::unique_ptr<LineChannel> open_channel(const std::string& endpoint) {
  constexpr std::string_view kStdio = "stdio:";
  if (endpoint.starts_with(kStdio)) return spawn_stdio(endpoint.substr(kStdio.size()));
  return connect_tcp(endpoint);
}

SidecarEmbedder::SidecarEmbedder(std::string endpoint, std::size_t expected_dim, std::size_t max_in_flight)
    : endpoint_(std::move(endpoint)), label_(endpoint_), dim_(expected_dim), max_in_flight_(std::max<std::size_t>(1, max_in_flight)) {}

SidecarEmbedder::SidecarEmbedder(std::unique_ptr<LineChannel> channel, std::string label, std::size_t expected_dim,
                                 std::size_t max_in_flight)
    : label_(std::move(label)), channel_(std::move(channel)), dim_(expected_dim),
      max_in_flight_(std::max<std::size_t>(1, max_in_flight)) {}

LineChannel& SidecarEmbedder::channel() {
  if (!channel_) channel_ = open_channel(endpoint_);
  return *channel_;
}

std::vector<std::vector<float>> SidecarEmbedder::embed_batch(std::span<const std::string> cleaned_texts) {
  std::vector<std::vector<float>> out(cleaned_texts.size());
  if (cleaned_texts.empty()) return out;
  // SIGPIPE from a dead stdio child must surface as SidecarUnavailable.
  ::signal(SIGPIPE, SIG_IGN);

  struct Pending {
    std::size_t begin;
    std::size_t count;
  };
  std::map<std::uint64_t, Pending> in_flight;
  std::size_t next_begin = 0;
  LineChannel& ch = channel();

  const auto send_next = [&] {
    const std::size_t count = std::min(kMaxSidecarBatch, cleaned_texts.size() - next_begin);
    const std::uint64_t id = next_id_++;
    json request = {{"id", id}, {"op", "embed"}};
    request["texts"] = std::vector<std::string>(cleaned_texts.begin() + static_cast<std::ptrdiff_t>(next_begin),
                                                cleaned_texts.begin() + static_cast<std::ptrdiff_t>(next_begin + count));
    ch.write_line(request.dump());
    in_flight.emplace(id, Pending{next_begin, count});
    next_begin += count;
  };

  while (next_begin < cleaned_texts.size() || !in_flight.empty()) {
    while (next_begin < cleaned_texts.size() && in_flight.size() < max_in_flight_) send_next();

    const auto line = ch.read_line();
    if (!line) unavailable(label_ + " closed the connection with " + std::to_string(in_flight.size()) + " requests pending");
    json response;
    try {
      response = json::parse(*line);
    } catch (const json::exception& e) {
      unavailable(label_ + " sent malformed JSON: " + e.what());
    }
    if (!response.is_object() || !response.contains("id") || !response["id"].is_number_unsigned()) {
      unavailable(label_ + " sent a response without a valid id");
    }
    const auto it = in_flight.find(response["id"].get<std::uint64_t>());
    if (it == in_flight.end()) unavailable(label_ + " answered unknown request id " + response["id"].dump());
    const Pending pending = it->second;
    in_flight.erase(it);

    if (response.contains("error")) {
      unavailable(label_ + " rejected request: " + response["error"].dump());
    }
    if (!response.contains("dim") || !response["dim"].is_number_unsigned() || !response.contains("vectors") ||
        !response["vectors"].is_array()) {
      unavailable(label_ + " sent a response without dim/vectors");
    }
    const auto dim = response["dim"].get<std::size_t>();
    if (dim == 0) throw Error(ErrorCode::kDimensionMismatch, label_ + " reported dim 0");
    if (dim_ == 0) dim_ = dim;
    if (dim != dim_) {
      throw Error(ErrorCode::kDimensionMismatch,
                  label_ + " reported dim " + std::to_string(dim) + ", expected " + std::to_string(dim_));
    }
    const auto& vectors = response["vectors"];
    if (vectors.size() != pending.count) {
      throw Error(ErrorCode::kDimensionMismatch, label_ + " returned " + std::to_string(vectors.size()) +
                                                     " vectors for " + std::to_string(pending.count) + " texts");
    }
    for (std::size_t j = 0; j < pending.count; ++j) {
      std::vector<float> values;
      try {
        values = vectors[j].get<std::vector<float>>();
      } catch (const json::exception& e) {
        unavailable(label_ + " sent a non-numeric vector: " + e.what());
      }
      if (values.size() != dim_) {
        throw Error(ErrorCode::kDimensionMismatch, label_ + " returned a " + std::to_string(values.size()) +
                                                       "-component vector, expected " + std::to_string(dim_));
      }
      out[pending.begin + j] = std::move(values);
    }
  }
  return out;
}

}  // namespace revrec::embedding
