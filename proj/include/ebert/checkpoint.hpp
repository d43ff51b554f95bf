#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>

#include "ebert/model.hpp"
#include "ebert/training.hpp"

namespace ebert {

// Versioned little-endian container of named tensors plus the configs needed
// to rebuild the model: magic "EBCK0001", config block, step counters, then
// (name, scalar width, rows, cols, payload) per tensor. Optimizer moments are
// stored under "opt.m." / "opt.v." prefixes when present.

constexpr char kCheckpointMagic[8] = {'E', 'B', 'C', 'K', '0', '0', '0', '1'};

namespace detail {

template <typename V>
void put_le(std::ostream& os, V value) {
  unsigned char buf[sizeof(V)];
  std::memcpy(buf, &value, sizeof(V));
  os.write(reinterpret_cast<const char*>(buf), sizeof(V));
}

template <typename V>
V get_le(std::istream& is) {
  unsigned char buf[sizeof(V)];
  is.read(reinterpret_cast<char*>(buf), sizeof(V));
  V value;
  std::memcpy(&value, buf, sizeof(V));
  return value;
}

inline void put_string(std::ostream& os, const std::string& s) {
  put_le<std::uint16_t>(os, static_cast<std::uint16_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string get_string(std::istream& is) {
  const auto n = get_le<std::uint16_t>(is);
  std::string s(n, '\0');
  is.read(s.data(), n);
  return s;
}

template <typename T>
void put_tensor(std::ostream& os, const std::string& name, const Mat<T>& m) {
  put_string(os, name);
  put_le<std::uint8_t>(os, static_cast<std::uint8_t>(sizeof(T)));
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(m.rows));
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(m.cols));
  for (T x : m.v) put_le<T>(os, x);
}

template <typename T>
void get_tensor_payload(std::istream& is, int scalar, Mat<T>& m) {
  for (auto& x : m.v) {
    if (scalar == 4)
      x = static_cast<T>(get_le<float>(is));
    else
      x = static_cast<T>(get_le<double>(is));
  }
}

}  // namespace detail

template <typename T>
struct Checkpoint {
  ModelConfig model_cfg;
  TokenizerConfig tok_cfg;
  std::int64_t step = 0;
  std::int64_t adam_t = 0;
  Parameters<T> params;
  bool has_optimizer = false;
  Parameters<T> opt_m, opt_v;
};

/// Allocate all tensors of a configuration, zero-filled.
template <typename T>
Parameters<T> shaped_parameters(const ModelConfig& cfg) {
  Rng rng(0);
  Parameters<T> p = Parameters<T>::init(cfg, rng);
  p.visit([](const std::string&, Mat<T>& m, bool) { m.fill(T(0)); });
  return p;
}

template <typename T>
void save_checkpoint(const std::string& path, const ModelConfig& cfg, const TokenizerConfig& tok,
                     const Parameters<T>& params, const AdamW<T>* adam, std::int64_t step) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
  os.write(kCheckpointMagic, sizeof(kCheckpointMagic));

  detail::put_le<std::int32_t>(os, cfg.layers);
  detail::put_le<std::int32_t>(os, cfg.heads);
  detail::put_le<std::int32_t>(os, cfg.hidden);
  detail::put_le<std::int32_t>(os, cfg.filter_size);
  detail::put_le<std::int32_t>(os, cfg.dna_vocab);
  detail::put_le<std::int32_t>(os, cfg.ideas_vocab);
  detail::put_le<std::int32_t>(os, cfg.l_input);
  detail::put_le<double>(os, cfg.dropout);
  detail::put_le<double>(os, cfg.attention_dropout);
  detail::put_le<std::uint8_t>(os, cfg.with_aux ? 1 : 0);
  detail::put_le<std::int32_t>(os, tok.k);
  detail::put_le<std::int32_t>(os, tok.stride);
  detail::put_le<std::int32_t>(os, tok.l_input);
  detail::put_le<std::int64_t>(os, step);
  detail::put_le<std::int64_t>(os, adam ? adam->t : 0);

  std::uint32_t count = 0;
  params.visit([&](const std::string&, const Mat<T>&, bool) { ++count; });
  detail::put_le<std::uint32_t>(os, adam ? count * 3 : count);

  params.visit([&](const std::string& name, const Mat<T>& m, bool) {
    detail::put_tensor(os, name, m);
  });
  if (adam) {
    adam->m.visit([&](const std::string& name, const Mat<T>& m, bool) {
      detail::put_tensor(os, "opt.m." + name, m);
    });
    adam->v.visit([&](const std::string& name, const Mat<T>& m, bool) {
      detail::put_tensor(os, "opt.v." + name, m);
    });
  }
  if (!os) throw std::runtime_error("write failure on '" + path + "'");
}

template <typename T>
Checkpoint<T> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint '" + path + "'");
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, kCheckpointMagic, 8) != 0)
    throw std::runtime_error("'" + path + "' is not an EBCK0001 checkpoint");

  Checkpoint<T> ck;
  ck.model_cfg.layers = detail::get_le<std::int32_t>(is);
  ck.model_cfg.heads = detail::get_le<std::int32_t>(is);
  ck.model_cfg.hidden = detail::get_le<std::int32_t>(is);
  ck.model_cfg.filter_size = detail::get_le<std::int32_t>(is);
  ck.model_cfg.dna_vocab = detail::get_le<std::int32_t>(is);
  ck.model_cfg.ideas_vocab = detail::get_le<std::int32_t>(is);
  ck.model_cfg.l_input = detail::get_le<std::int32_t>(is);
  ck.model_cfg.dropout = detail::get_le<double>(is);
  ck.model_cfg.attention_dropout = detail::get_le<double>(is);
  ck.model_cfg.with_aux = detail::get_le<std::uint8_t>(is) != 0;
  ck.tok_cfg.k = detail::get_le<std::int32_t>(is);
  ck.tok_cfg.stride = detail::get_le<std::int32_t>(is);
  ck.tok_cfg.l_input = detail::get_le<std::int32_t>(is);
  ck.step = detail::get_le<std::int64_t>(is);
  ck.adam_t = detail::get_le<std::int64_t>(is);
  const auto count = detail::get_le<std::uint32_t>(is);

  ck.params = shaped_parameters<T>(ck.model_cfg);
  ck.opt_m = ck.params;
  ck.opt_v = ck.params;

  std::map<std::string, Mat<T>*> slots;
  ck.params.visit([&](const std::string& n, Mat<T>& m, bool) { slots[n] = &m; });
  ck.opt_m.visit([&](const std::string& n, Mat<T>& m, bool) { slots["opt.m." + n] = &m; });
  ck.opt_v.visit([&](const std::string& n, Mat<T>& m, bool) { slots["opt.v." + n] = &m; });

  std::size_t loaded = 0;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = detail::get_string(is);
    const int scalar = detail::get_le<std::uint8_t>(is);
    const int rows = static_cast<int>(detail::get_le<std::uint32_t>(is));
    const int cols = static_cast<int>(detail::get_le<std::uint32_t>(is));
    if (scalar != 4 && scalar != 8)
      throw std::runtime_error("checkpoint tensor " + name + " has unknown scalar width");
    auto it = slots.find(name);
    if (it == slots.end()) throw std::runtime_error("unexpected checkpoint tensor " + name);
    if (it->second->rows != rows || it->second->cols != cols)
      throw std::runtime_error("checkpoint tensor " + name + " has mismatched shape");
    detail::get_tensor_payload(is, scalar, *it->second);
    ++loaded;
    if (name.rfind("opt.", 0) == 0) ck.has_optimizer = true;
  }
  if (!is) throw std::runtime_error("truncated checkpoint '" + path + "'");
  const std::size_t param_tensors = slots.size() / 3;
  const std::size_t expected = ck.has_optimizer ? 3 * param_tensors : param_tensors;
  if (loaded != expected)
    throw std::runtime_error("checkpoint '" + path + "' is missing tensors");
  return ck;
}

/// Rebuild the optimizer from a checkpoint that carries its moments.
template <typename T>
AdamW<T> adam_from_checkpoint(const Checkpoint<T>& ck, const OptimSettings& settings) {
  AdamW<T> a;
  a.settings = settings;
  a.m = ck.has_optimizer ? ck.opt_m : ck.params.zeros_like();
  a.v = ck.has_optimizer ? ck.opt_v : ck.params.zeros_like();
  a.t = ck.has_optimizer ? ck.adam_t : 0;
  return a;
}

}  // namespace ebert
