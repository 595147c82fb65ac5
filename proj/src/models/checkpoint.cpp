// SPDX-License-Identifier: Apache-2.0
#include "serdarts/models/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace serdarts::models {

namespace {

constexpr std::string_view kMagic = "SERCK1\n";

struct NamedTensor {
  std::string name;
  Tensor<float> tensor;
  nn::TensorRole role;
};

std::vector<NamedTensor> named_tensors(nn::Layer<float>& model) {
  std::vector<NamedTensor> out;
  model.visit("", [&out](const std::string& name, Tensor<float>& t, nn::TensorRole role) {
    out.push_back({name, t, role});
  });
  return out;
}

}  // namespace

std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void save_checkpoint(const ModelBundle& bundle, const nlohmann::ordered_json& metadata,
                     const std::filesystem::path& path) {
  nlohmann::ordered_json header;
  header["model"] = bundle.spec.to_json();
  header["fingerprint"] = bundle.fingerprint;
  header["metadata"] = metadata;
  header["tensors"] = nlohmann::ordered_json::array();
  std::string payload;
  for (auto& nt : named_tensors(*bundle.model)) {
    header["tensors"].push_back({{"name", nt.name},
                                 {"shape", nt.tensor.shape()},
                                 {"role", nt.role == nn::TensorRole::parameter ? "parameter" : "buffer"}});
    for (float v : nt.tensor.data()) {
      const auto bits = std::bit_cast<std::uint32_t>(v);
      for (int i = 0; i < 4; ++i) payload.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
    }
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write checkpoint " + path.string());
  out << kMagic << header.dump() << '\n';
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!out) throw Error("failed writing checkpoint " + path.string());
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string bytes = ss.str();
  const std::string where = "checkpoint " + path.string() + ": ";
  if (bytes.compare(0, kMagic.size(), kMagic) != 0) throw Error(where + "bad magic (expected SERCK1)");
  const std::size_t eol = bytes.find('\n', kMagic.size());
  if (eol == std::string::npos) throw Error(where + "unterminated header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(kMagic.size(), eol - kMagic.size()));
  } catch (const nlohmann::json::exception& e) {
    throw Error(where + "malformed header: " + e.what());
  }
  LoadedCheckpoint loaded;
  RngState rng(0);
  loaded.bundle = build_model(ModelSpec::from_json(header.at("model")), rng);
  if (header.at("fingerprint").get<std::string>() != loaded.bundle.fingerprint) {
    throw Error(where + "fingerprint mismatch: stored " + header.at("fingerprint").get<std::string>() +
                ", rebuilt " + loaded.bundle.fingerprint);
  }
  loaded.metadata = header.value("metadata", nlohmann::json::object());
  auto tensors = named_tensors(*loaded.bundle.model);
  const auto& listed = header.at("tensors");
  if (listed.size() != tensors.size()) {
    throw Error(where + "stores " + std::to_string(listed.size()) + " tensors, model has " +
                std::to_string(tensors.size()));
  }
  std::size_t expected = 0;
  for (const auto& nt : tensors) expected += nt.tensor.numel() * 4;
  if (bytes.size() - eol - 1 != expected) {
    throw Error(where + "length mismatch: expected " + std::to_string(expected) + " payload bytes, found " +
                std::to_string(bytes.size() - eol - 1));
  }
  const char* p = bytes.data() + eol + 1;
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    auto& nt = tensors[i];
    if (listed[i].at("name").get<std::string>() != nt.name ||
        listed[i].at("shape").get<Shape>() != nt.tensor.shape()) {
      throw Error(where + "tensor " + std::to_string(i) + " is " + listed[i].at("name").get<std::string>() +
                  " but the model expects " + nt.name + " " + shape_str(nt.tensor.shape()));
    }
    for (float& v : nt.tensor.data()) {
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b) bits |= std::uint32_t(static_cast<unsigned char>(p[b])) << (8 * b);
      v = std::bit_cast<float>(bits);
      p += 4;
    }
  }
  return loaded;
}

}  // namespace serdarts::models
