#pragma once

#include "revrec/embedding.hpp"

#include <memory>
#include <optional>
#include <string>

namespace revrec::embedding {

/// Bidirectional newline-delimited channel to an embedding server.
class LineChannel {
 public:
  virtual ~LineChannel() = default;
  virtual void write_line(const std::string& line) = 0;
  /// nullopt on orderly end of stream.
  virtual std::optional<std::string> read_line() = 0;
};

/// Endpoint forms:
///   "host:port"        TCP connection
///   "stdio:<command>"  spawn `/bin/sh -c <command>` and talk over its stdin/stdout
/// Throws SidecarUnavailable when the connection cannot be established.
std::unique_ptr<LineChannel> open_channel(const std::string& endpoint);

/// Client for the sidecar protocol:
///   request  {"id": int, "op": "embed", "texts": [str]}
///   response {"id": int, "dim": int, "vectors": [[float]]} | {"id": int, "error": str}
/// Texts are split into requests of at most 64; up to `max_in_flight`
/// requests are outstanding at once and responses are matched by id.
class SidecarEmbedder final : public Embedder {
 public:
  /// `expected_dim` 0 adopts the dimension of the first response.
  SidecarEmbedder(std::string endpoint, std::size_t expected_dim = 0, std::size_t max_in_flight = 4);
  SidecarEmbedder(std::unique_ptr<LineChannel> channel, std::string label, std::size_t expected_dim = 0,
                  std::size_t max_in_flight = 4);

  std::string backend_id() const override { return "sidecar:" + label_; }
  std::size_t dim() const override { return dim_; }
  std::vector<std::vector<float>> embed_batch(std::span<const std::string> cleaned_texts) override;

  std::size_t requests_sent() const noexcept { return next_id_; }

 private:
  LineChannel& channel();

  std::string endpoint_;
  std::string label_;
  std::unique_ptr<LineChannel> channel_;
  std::size_t dim_;
  std::size_t max_in_flight_;
  std::uint64_t next_id_ = 0;
};

}  // namespace revrec::embedding
