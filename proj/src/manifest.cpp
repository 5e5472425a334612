#include "cablecal/manifest.hpp"

#include <fstream>
#include <memory>

#include <openssl/evp.h>

#include "cablecal/core.hpp"

namespace cablecal {

namespace {

struct Sha256 {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx{EVP_MD_CTX_new(), &EVP_MD_CTX_free};

  Sha256() {
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) throw Error("sha256: init failed");
  }
  void update(const void* data, std::size_t size) {
    if (EVP_DigestUpdate(ctx.get(), data, size) != 1) throw Error("sha256: update failed");
  }
  std::string hex() {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_DigestFinal_ex(ctx.get(), md, &len) != 1) throw Error("sha256: final failed");
    static const char* digits = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
      out.push_back(digits[md[i] >> 4]);
      out.push_back(digits[md[i] & 0xf]);
    }
    return out;
  }
};

}  // namespace

std::string sha256_hex(const void* data, std::size_t size) {
  Sha256 h;
  h.update(data, size);
  return h.hex();
}

std::string sha256_hex(const std::string& s) { return sha256_hex(s.data(), s.size()); }

std::string sha256_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw FormatError("cannot open " + p.string());
  Sha256 h;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    if (in.gcount() > 0) h.update(buf, static_cast<std::size_t>(in.gcount()));
  }
  return h.hex();
}

std::string RunManifest::id() const {
  nlohmann::json j;
  j["tool_version"] = tool_version;
  j["command"] = command;
  j["config_hash"] = config_hash;
  j["seed"] = seed;
  j["repeats"] = repeats;
  j["inputs"] = inputs;
  return sha256_hex(j.dump()).substr(0, 16);
}

nlohmann::json RunManifest::to_json() const {
  nlohmann::json j;
  j["id"] = id();
  j["tool_version"] = tool_version;
  j["command"] = command;
  j["config_hash"] = config_hash;
  j["seed"] = seed;
  j["repeats"] = repeats;
  j["inputs"] = inputs;
  j["outputs"] = outputs;
  j["stages"] = nlohmann::json::array();
  for (const auto& s : stages) {
    nlohmann::json sj{{"name", s.name},       {"status", s.status},   {"wall_s", s.wall_s},
                      {"simulated_s", s.simulated_s}, {"outputs", s.outputs}};
    if (!s.error.empty()) sj["error"] = s.error;
    j["stages"].push_back(sj);
  }
  return j;
}

void RunManifest::write(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  out << to_json().dump(2) << '\n';
}

}  // namespace cablecal
