#pragma once

#include <cstdint>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "ebert/model.hpp"
#include "ebert/text_io.hpp"
#include "ebert/training.hpp"

namespace ebert {

/// Resolved run settings: tokenizer geometry, model dimensions and the
/// optimizer/schedule block. File keys mirror the published hyperparameter
/// table names in snake_case; CLI flags override file values.
struct RunConfig {
  int input_size_bp = 1000;
  int kmer_size = 7;
  int tokenization_stride = 7;
  int input_sequence_length = 150;

  int layers = 2;
  int attention_heads = 2;
  int hidden_size = 32;
  int filter_size = 64;
  double dropout = 0.0;
  double attention_dropout = 0.0;

  double peak_learning_rate = 1e-3;
  std::int64_t warmup_steps = 50;
  int batch_size = 32;  // desk-scale default; the published values load from files
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.98;
  double adam_epsilon = 1e-4;
  double weight_decay = 0.01;
  double alpha = 0.5;
  std::int64_t steps = 500;
  int max_epochs = 20;
  int training_class_balance = 10;
  std::uint64_t seed = 42;

  TokenizerConfig tokenizer() const { return {kmer_size, tokenization_stride, input_sequence_length}; }

  ModelConfig model(bool dna_only, bool with_aux) const {
    ModelConfig m;
    m.layers = layers;
    m.heads = attention_heads;
    m.hidden = hidden_size;
    m.filter_size = filter_size;
    m.dna_vocab = build_vocab(kmer_size).size;
    m.ideas_vocab = dna_only ? 0 : kIdeasVocab;
    m.l_input = input_sequence_length;
    m.dropout = dropout;
    m.attention_dropout = attention_dropout;
    m.with_aux = with_aux;
    return m;
  }

  OptimSettings optim() const { return {adam_beta1, adam_beta2, adam_epsilon, weight_decay}; }

  void apply_preset(const std::string& name) {
    if (name == "tiny") {
      layers = 2;
      attention_heads = 2;
      hidden_size = 32;
      filter_size = 64;
      dropout = 0.0;
      attention_dropout = 0.0;
    } else if (name == "bert-base") {
      layers = 12;
      attention_heads = 12;
      hidden_size = 768;
      filter_size = 3072;
      dropout = 0.1;
      attention_dropout = 0.1;
    } else {
      throw std::invalid_argument("unknown preset '" + name + "' (tiny, bert-base)");
    }
  }

  /// Returns false for unknown keys so the caller can warn.
  bool apply_kv(const std::string& key, const std::string& value) {
    auto as_int = [&]() {
      std::int64_t v;
      if (!detail::parse_i64(value, v)) throw std::invalid_argument("bad integer for " + key);
      return v;
    };
    auto as_real = [&]() {
      double v;
      if (!detail::parse_f64(value, v)) throw std::invalid_argument("bad number for " + key);
      return v;
    };

    if (key == "input_size_bp") input_size_bp = static_cast<int>(as_int());
    else if (key == "input_sequence_length") input_sequence_length = static_cast<int>(as_int());
    else if (key == "kmer_size" || key == "k_mer_size") kmer_size = static_cast<int>(as_int());
    else if (key == "tokenization_stride") tokenization_stride = static_cast<int>(as_int());
    else if (key == "peak_learning_rate") peak_learning_rate = as_real();
    else if (key == "warmup_steps") warmup_steps = as_int();
    else if (key == "batch_size") batch_size = static_cast<int>(as_int());
    else if (key == "adam_beta1") adam_beta1 = as_real();
    else if (key == "adam_beta2") adam_beta2 = as_real();
    else if (key == "adam_epsilon") adam_epsilon = as_real();
    else if (key == "weight_decay") weight_decay = as_real();
    else if (key == "alpha") alpha = as_real();
    else if (key == "steps") steps = as_int();
    else if (key == "max_epochs") max_epochs = static_cast<int>(as_int());
    else if (key == "seed") seed = static_cast<std::uint64_t>(as_int());
    else if (key == "attention_dropout") attention_dropout = as_real();
    else if (key == "dropout") dropout = as_real();
    else if (key == "attention_heads") attention_heads = static_cast<int>(as_int());
    else if (key == "layers") layers = static_cast<int>(as_int());
    else if (key == "filter_size") filter_size = static_cast<int>(as_int());
    else if (key == "hidden_size") hidden_size = static_cast<int>(as_int());
    else if (key == "training_class_balance") {
      std::string head = value.substr(0, value.find(':'));
      std::int64_t v;
      if (!detail::parse_i64(head, v)) throw std::invalid_argument("bad class balance " + value);
      training_class_balance = static_cast<int>(v);
    } else if (key == "optimizer") {
      if (value != "adamw" && value != "AdamW")
        throw std::invalid_argument("only the AdamW optimizer is supported");
    } else if (key == "convolution_layers" || key == "dense_layers") {
      if (as_int() != 2)
        throw std::invalid_argument("the binding head is fixed at 2 " + key);
    } else {
      return false;
    }
    return true;
  }

  /// key=value file, '#' comments. Unknown keys are collected as warnings;
  /// loss_scale in particular is a mixed-precision setting of the original
  /// training hardware and is deliberately not implemented.
  void apply_file(const std::string& path, std::vector<std::string>* warnings) {
    const auto lines = read_lines(path);
    for (std::size_t i = 0; i < lines.size(); ++i) {
      std::string line = lines[i];
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.resize(hash);
      const auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t");
        const auto e = s.find_last_not_of(" \t");
        return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
      };
      line = trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos)
        throw ParseError(path, static_cast<std::int64_t>(i) + 1, "expected key=value");
      const std::string key = trim(line.substr(0, eq));
      const std::string value = trim(line.substr(eq + 1));
      if (key == "loss_scale") {
        if (warnings)
          warnings->push_back("loss_scale is a mixed-precision setting of the original "
                              "training hardware; ignored");
        continue;
      }
      if (!apply_kv(key, value) && warnings)
        warnings->push_back("unknown config key '" + key + "' ignored");
    }
  }

  void write(std::ostream& os) const {
    os << "input_size_bp=" << input_size_bp << "\n";
    os << "input_sequence_length=" << input_sequence_length << "\n";
    os << "kmer_size=" << kmer_size << "\n";
    os << "tokenization_stride=" << tokenization_stride << "\n";
    os << "layers=" << layers << "\n";
    os << "attention_heads=" << attention_heads << "\n";
    os << "hidden_size=" << hidden_size << "\n";
    os << "filter_size=" << filter_size << "\n";
    os << "dropout=" << dropout << "\n";
    os << "attention_dropout=" << attention_dropout << "\n";
    os << "peak_learning_rate=" << peak_learning_rate << "\n";
    os << "warmup_steps=" << warmup_steps << "\n";
    os << "batch_size=" << batch_size << "\n";
    os << "adam_beta1=" << adam_beta1 << "\n";
    os << "adam_beta2=" << adam_beta2 << "\n";
    os << "adam_epsilon=" << adam_epsilon << "\n";
    os << "weight_decay=" << weight_decay << "\n";
    os << "alpha=" << alpha << "\n";
    os << "steps=" << steps << "\n";
    os << "max_epochs=" << max_epochs << "\n";
    os << "training_class_balance=" << training_class_balance << "\n";
    os << "seed=" << seed << "\n";
  }
};

}  // namespace ebert
