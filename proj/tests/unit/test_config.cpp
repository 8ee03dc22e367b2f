#include <doctest.h>

#include "relagent/config.hpp"
#include "relagent/error.hpp"
#include "test_support.hpp"

using namespace relagent;

namespace {

EnvLookup fake_env(std::map<std::string, std::string> vars) {
  return [vars = std::move(vars)](const std::string& name) -> std::optional<std::string> {
    auto it = vars.find(name);
    if (it == vars.end()) return std::nullopt;
    return it->second;
  };
}

Errc code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return Errc::Precondition;
}

const char* kGenReflect = R"(
architecture = "gen_reflect"
dataset = "core"
data_dir = "data/core"
split = "test"
parallelism = 2
limit = 25
output_dir = "runs/${RUN_NAME}"

[engine]
max_dialogue_cycles = 3
temperature = 0.0

[roles.generator]
base_url = "https://api.example.com/v1"
model_id = "gen-model"

[roles.reflector]
base_url = "https://other.example.com/v1"
model_id = "ref-model"
api_key = "${REFLECTOR_SECRET}"
requests_per_minute = 60
)";

}  // namespace

TEST_CASE("TOML run configuration") {
  auto c = parse_run_config(kGenReflect, "/base",
                            fake_env({{"RUN_NAME", "trial"}, {"API_KEY", "shared"}, {"REFLECTOR_SECRET", "s3"}}));
  CHECK(c.architecture == Architecture::gen_reflect);
  CHECK(c.dataset == DatasetId::core);
  CHECK(c.data_dir == "/base/data/core");
  CHECK(c.output_dir == "/base/runs/trial");
  CHECK(c.parallelism == 2);
  CHECK(c.limit == 25);
  CHECK(c.roles.at("generator").api_key == "shared");
  CHECK(c.roles.at("reflector").api_key == "s3");
  CHECK(c.roles.at("reflector").requests_per_minute == 60.0);
  CHECK_NOTHROW(c.validate());
}

TEST_CASE("per-role API key beats the shared one") {
  auto c = parse_run_config(kGenReflect, "/base",
                            fake_env({{"API_KEY", "shared"}, {"GENERATOR_API_KEY", "gen-only"}}));
  CHECK(c.roles.at("generator").api_key == "gen-only");
  CHECK(c.roles.at("reflector").api_key == "shared");
}

TEST_CASE("environment interpolation") {
  auto env = fake_env({{"A", "x"}, {"B_2", "y"}});
  CHECK(interpolate_env("${A}-${B_2}-${MISSING}-$A-{A}", env) == "x-y--$A-{A}");
}

TEST_CASE("configuration errors") {
  auto env = fake_env({{"API_KEY", "k"}});
  CHECK(code_of([&] { parse_run_config("architecture = \"gen_reflect\"\nbogus = 1\n", "", env); }) ==
        Errc::InvalidConfig);
  CHECK(code_of([&] { parse_run_config("[engine]\nmax_cycles = 2\n", "", env); }) == Errc::InvalidConfig);
  CHECK(code_of([&] { parse_run_config("[roles.critic]\nmodel_id = \"m\"\n", "", env); }) == Errc::InvalidConfig);
  CHECK(code_of([&] { parse_run_config("architecture = \"five_agent\"\n", "", env); }) == Errc::InvalidConfig);
  CHECK(code_of([&] { parse_run_config("architecture = [", "", env); }) == Errc::InvalidConfig);

  // gen_reflect without a reflector binding.
  auto no_reflector = parse_run_config(
      "architecture = \"gen_reflect\"\ndata_dir = \"d\"\n[roles.generator]\nbase_url = \"u\"\nmodel_id = \"m\"\n", "",
      env);
  CHECK(code_of([&] { no_reflector.validate(); }) == Errc::InvalidConfig);

  auto c = parse_run_config(kGenReflect, "", env);
  c.parallelism = 0;
  CHECK(code_of([&] { c.validate(); }) == Errc::InvalidConfig);

  auto keyless = parse_run_config(kGenReflect, "", fake_env({}));
  CHECK(code_of([&] { keyless.validate(); }) == Errc::InvalidConfig);
  keyless.scripted = "script.json";
  CHECK_NOTHROW(keyless.validate());

  auto zero = parse_run_config(kGenReflect, "", env);
  zero.architecture = Architecture::zero_shot;
  zero.roles["classifier"] = {"u", "m", "k", 0, 1};
  zero.engine.n_shot = 3;
  CHECK(code_of([&] { zero.validate(); }) == Errc::InvalidConfig);
}

TEST_CASE("digest ignores secrets, paths and parallelism") {
  auto a = parse_run_config(kGenReflect, "/a", fake_env({{"API_KEY", "one"}, {"RUN_NAME", "x"}}));
  auto b = parse_run_config(kGenReflect, "/b", fake_env({{"API_KEY", "two"}, {"RUN_NAME", "y"}}));
  b.parallelism = 7;
  CHECK(a.digest() == b.digest());
  CHECK(a.run_id().rfind("gen_reflect-core-", 0) == 0);
  CHECK(a.run_id().size() == std::string("gen_reflect-core-").size() + 12);
  b.engine.max_dialogue_cycles = 2;
  CHECK(a.digest() != b.digest());
}
