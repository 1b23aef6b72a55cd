// Minimal stdio embedding server for client tests. Vectors come from the hash
// embedder over the whitespace tokens of each text.
//
//   fake_sidecar [normal|error|wrong-dim|short|die|garbage] [dim]

#include "revrec/embedding.hpp"
#include "revrec/textprep.hpp"

#include <nlohmann/json.hpp>

#include <iostream>
#include <string>

int main(int argc, char** argv) {
  const std::string mode = argc > 1 ? argv[1] : "normal";
  const std::size_t dim = argc > 2 ? std::stoul(argv[2]) : 256;
  std::string line;
  std::size_t served = 0;
  while (std::getline(std::cin, line)) {
    const auto request = nlohmann::json::parse(line);
    nlohmann::json response = {{"id", request.at("id")}};
    const auto& texts = request.at("texts");
    if (mode == "die" && served > 0) return 1;
    if (mode == "garbage") {
      std::cout << "this is not json" << std::endl;
      continue;
    }
    if (mode == "error" || texts.empty()) {
      response["error"] = texts.empty() ? "empty batch" : "model not loaded";
    } else {
      const std::size_t out_dim = mode == "wrong-dim" && served > 0 ? dim + 1 : dim;
      response["dim"] = out_dim;
      auto vectors = nlohmann::json::array();
      for (const auto& t : texts) {
        const auto tokens = revrec::textprep::split_tokens(t.get<std::string>());
        vectors.push_back(revrec::embedding::hash_embed(tokens, out_dim).values);
      }
      if (mode == "short") vectors.erase(vectors.begin());
      response["vectors"] = vectors;
    }
    ++served;
    std::cout << response.dump() << std::endl;
  }
  return 0;
}
