#include "ctiunet/hashing.hpp"

#include <fstream>
#include <sstream>

#include <openssl/evp.h>

#include "ctiunet/errors.hpp"

namespace ctiunet {

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(),
                 nullptr) != 1) {
    throw HarnessError("sha256 failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xf]);
  }
  return out;
}

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw LoadError(LoadErrorKind::kIo, "cannot open " + path.string());
  std::ostringstream buf;
  buf << is.rdbuf();
  return sha256_hex(buf.str());
}

}  // namespace ctiunet
