#include <cstdlib>
#include <fstream>

#include "doctest.h"
#include "gengan/config.hpp"
#include "gengan/error.hpp"
#include "gengan/trainer.hpp"
#include "test_support.hpp"

using namespace gengan;

TEST_CASE("key-value parsing") {
  const auto kv = parse_key_values("# comment\n\nepochs = 5\n  seed=3 # trailing\n");
  REQUIRE(kv.size() == 2);
  CHECK(kv[0].key == "epochs");
  CHECK(kv[0].value == "5");
  CHECK(kv[0].line == 3);
  CHECK(kv[1].value == "3");
  CHECK(to_int(kv[0]) == 5);

  try {
    parse_key_values("a = 1\nnot a pair\n");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }
  CHECK_THROWS_AS(parse_key_values("= 4\n"), ParseError);
  CHECK_THROWS_AS(parse_key_values("a = 1\na = 2\n"), ParseError);
  CHECK_THROWS_AS(to_int(KeyValue{"k", "4.5", 1}), ParseError);
  CHECK_THROWS_AS(to_double(KeyValue{"k", "x", 1}), ParseError);
  CHECK(to_double(KeyValue{"k", "1e-3", 1}) == 0.001);
  CHECK_THROWS_AS(read_text_file("/nonexistent/gengan.cfg"), MissingAsset);
}

TEST_CASE("training configuration") {
  const auto c = parse_train_config("epochs = 7\nepsilon = 0.1\ngenerator_target = ambiguous\nbatch_size=4\n");
  CHECK(c.epochs == 7);
  CHECK(c.epsilon == 0.1);
  CHECK(c.batch_size == 4);
  CHECK(c.generator_target == GeneratorTarget::ambiguous);
  CHECK(c.learning_rate == 0.001);

  try {
    parse_train_config("epochs = 3\nlearning_rte = 0.1\n");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }
  CHECK_THROWS_AS(parse_train_config("generator_target = both\n"), InvalidInput);
  CHECK_THROWS_AS(parse_train_config("epochs = 0\n").validate(), InvalidInput);
  CHECK_THROWS_AS(parse_train_config("epsilon = 2\n").validate(), InvalidInput);
  CHECK_THROWS_AS(parse_train_config("learning_rate = 0\n").validate(), InvalidInput);

  TrainConfig d;
  d.epsilon = 0.123456789012345;
  d.seed = 42;
  std::string text;
  for (const auto& [k, v] : to_key_values(d)) text += k + " = " + v + "\n";
  const auto back = parse_train_config(text);
  CHECK(back.epsilon == d.epsilon);
  CHECK(back.seed == 42);
  CHECK(to_key_values(back) == to_key_values(d));
}

TEST_CASE("output root") {
  const auto dir = test_support::scratch_dir("outroot");
  setenv("GENGAN_OUTPUT_ROOT", dir.c_str(), 1);
  CHECK(resolve_output("a/b.json") == dir / "a/b.json");
  CHECK(resolve_output("/abs/x") == std::filesystem::path("/abs/x"));
  unsetenv("GENGAN_OUTPUT_ROOT");
  CHECK(resolve_output("x") == std::filesystem::current_path() / "x");
}
