#include "ebert/config.hpp"

#include <sstream>

#include "doctest.h"
#include "fixtures.hpp"

using namespace ebert;

namespace {
const std::string kConfigDir = std::string(EBERT_DATA_DIR) + "/configs";
}

TEST_CASE("presets set the model dimensions") {
  RunConfig rc;
  rc.apply_preset("bert-base");
  CHECK(rc.layers == 12);
  CHECK(rc.attention_heads == 12);
  CHECK(rc.hidden_size == 768);
  CHECK(rc.filter_size == 3072);
  CHECK(rc.dropout == 0.1);

  rc.apply_preset("tiny");
  CHECK(rc.hidden_size == 32);
  CHECK(rc.filter_size == 64);

  CHECK_THROWS_AS(rc.apply_preset("huge"), std::invalid_argument);
}

TEST_CASE("the shipped hyperparameter files load") {
  RunConfig rc;
  std::vector<std::string> warnings;
  rc.apply_file(kConfigDir + "/ebert_pretrain.cfg", &warnings);
  CHECK(rc.peak_learning_rate == 0.00006);
  CHECK(rc.warmup_steps == 30000);
  CHECK(rc.batch_size == 8192);
  CHECK(rc.adam_beta2 == 0.98);
  CHECK(rc.alpha == 0.5);
  CHECK(rc.hidden_size == 768);
  REQUIRE(warnings.size() == 1);  // loss_scale is deliberately unimplemented
  CHECK(warnings[0].find("loss_scale") != std::string::npos);

  RunConfig tf;
  warnings.clear();
  tf.apply_file(kConfigDir + "/tf_binding.cfg", &warnings);
  CHECK(tf.peak_learning_rate == 0.0001);
  CHECK(tf.warmup_steps == 25000);
  CHECK(tf.batch_size == 320);
  CHECK(tf.training_class_balance == 10);
  CHECK(tf.adam_beta2 == 0.99);
  CHECK(tf.adam_epsilon == 0.00001);
  CHECK(tf.dropout == 0.0);  // blank in the published table

  RunConfig db;
  warnings.clear();
  db.apply_file(kConfigDir + "/dbert_pretrain.cfg", &warnings);
  CHECK(db.peak_learning_rate == 0.0004);
  CHECK(db.warmup_steps == 24000);
  CHECK(db.batch_size == 4096);
}

TEST_CASE("config parsing flags unknown keys and rejects bad values") {
  fixtures::TempDir tmp("config");
  fixtures::write_file(tmp.path("a.cfg"), "peak_learning_rate=0.01\nmystery_knob=3\n");
  RunConfig rc;
  std::vector<std::string> warnings;
  rc.apply_file(tmp.path("a.cfg"), &warnings);
  CHECK(rc.peak_learning_rate == 0.01);
  REQUIRE(warnings.size() == 1);
  CHECK(warnings[0].find("mystery_knob") != std::string::npos);

  fixtures::write_file(tmp.path("b.cfg"), "layers=twelve\n");
  CHECK_THROWS_AS(rc.apply_file(tmp.path("b.cfg"), nullptr), std::invalid_argument);

  fixtures::write_file(tmp.path("c.cfg"), "optimizer=sgd\n");
  CHECK_THROWS_AS(rc.apply_file(tmp.path("c.cfg"), nullptr), std::invalid_argument);

  fixtures::write_file(tmp.path("d.cfg"), "convolution_layers=3\n");
  CHECK_THROWS_AS(rc.apply_file(tmp.path("d.cfg"), nullptr), std::invalid_argument);

  fixtures::write_file(tmp.path("e.cfg"), "no equals sign here\n");
  CHECK_THROWS_AS(rc.apply_file(tmp.path("e.cfg"), nullptr), ParseError);
}

TEST_CASE("run config maps onto model and tokenizer configs") {
  RunConfig rc;
  rc.kmer_size = 5;
  rc.tokenization_stride = 5;
  rc.input_sequence_length = 150;
  rc.apply_preset("tiny");

  const auto paired = rc.model(false, true);
  CHECK(paired.dna_vocab == 1027);  // 4^5 + 3
  CHECK(paired.ideas_vocab == kIdeasVocab);
  CHECK(paired.with_aux);
  CHECK(paired.l_input == 150);

  const auto dna_only = rc.model(true, false);
  CHECK(dna_only.ideas_vocab == 0);
  CHECK(!dna_only.has_ideas());

  const auto tok = rc.tokenizer();
  CHECK(tok.k == 5);
  CHECK(tok.real_tokens(1000) == 200);
}

TEST_CASE("resolved configs round-trip through write and parse") {
  RunConfig rc;
  rc.apply_preset("bert-base");
  rc.seed = 977;
  rc.alpha = 0.25;
  rc.steps = 1234;

  std::ostringstream os;
  rc.write(os);
  fixtures::TempDir tmp("roundtrip");
  fixtures::write_file(tmp.path("r.cfg"), os.str());

  RunConfig back;
  back.apply_file(tmp.path("r.cfg"), nullptr);
  CHECK(back.seed == 977);
  CHECK(back.alpha == 0.25);
  CHECK(back.steps == 1234);
  CHECK(back.hidden_size == 768);
  CHECK(back.peak_learning_rate == rc.peak_learning_rate);
}
