#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include "relagent/retrieval_index.hpp"
#include "test_support.hpp"

using namespace relagent;

namespace {

// Exhaustive scan over the stored unit vectors, ties by ascending id.
std::vector<Neighbor> oracle(const VectorIndex& index, const std::vector<float>& q, std::size_t k) {
  double qn = 0;
  for (float x : q) qn += double(x) * double(x);
  qn = std::sqrt(qn);
  std::vector<Neighbor> all;
  for (std::size_t r = 0; r < index.size(); ++r) {
    auto v = index.vector(r);
    double dot = 0;
    for (std::size_t d = 0; d < q.size(); ++d) dot += (double(q[d]) / qn) * double(v[d]);
    all.push_back({index.ids()[r], std::clamp(dot, -1.0, 1.0)});
  }
  std::sort(all.begin(), all.end(), [](const Neighbor& a, const Neighbor& b) {
    return a.similarity != b.similarity ? a.similarity > b.similarity : a.instance_id < b.instance_id;
  });
  all.resize(std::min(k, all.size()));
  return all;
}

std::vector<float> vec(std::initializer_list<float> v) { return v; }

}  // namespace

TEST_CASE("vectors are normalized on insert") {
  VectorIndex index;
  index.add("a", vec({3, 4}));
  CHECK(index.dimension() == 2);
  auto v = index.vector(0);
  CHECK(v[0] == doctest::Approx(0.6));
  CHECK(v[1] == doctest::Approx(0.8));
}

TEST_CASE("query examples") {
  VectorIndex index;
  index.add("a", vec({1, 0}));
  index.add("b", vec({0, 1}));
  auto one = index.query(vec({1, 0}), 1);
  REQUIRE(one.size() == 1);
  CHECK(one[0].instance_id == "a");
  CHECK(one[0].similarity == doctest::Approx(1.0));

  auto two = index.query(vec({0.6f, 0.8f}), 2);
  REQUIRE(two.size() == 2);
  CHECK(two[0].instance_id == "b");
  CHECK(two[0].similarity == doctest::Approx(0.8));
  CHECK(two[1].instance_id == "a");
  CHECK(two[1].similarity == doctest::Approx(0.6));

  CHECK(index.query(vec({1, 1}), 10).size() == 2);
}

TEST_CASE("ties break by ascending id") {
  VectorIndex index;
  index.add("c", vec({1, 0}));
  index.add("a", vec({2, 0}));
  index.add("b", vec({0, 1}));
  auto r = index.query(vec({1, 0}), 3);
  CHECK(r[0].instance_id == "a");
  CHECK(r[1].instance_id == "c");
  CHECK(r[2].instance_id == "b");
}

TEST_CASE("dimension and id guards") {
  VectorIndex index;
  index.add("a", vec({1, 0, 0, 0}));
  CHECK_THROWS_AS(index.add("b", vec({1, 0, 0, 0, 0})), Error);
  CHECK_THROWS_AS(index.add("z", vec({0, 0, 0, 0})), Error);
  CHECK_THROWS_AS(index.add("a", vec({0, 1, 0, 0})), Error);
  CHECK_THROWS_AS(index.query(vec({1, 0}), 1), Error);
}

TEST_CASE("build_index embeds every training instance") {
  std::vector<RelationInstance> train;
  for (int i = 0; i < 3; ++i) {
    train.push_back(testing::make_instance("t" + std::to_string(i), "A" + std::to_string(i) + " owns B", "A" + std::to_string(i), "B",
                                           std::string("acquired_by")));
  }
  std::shared_ptr<ScriptedBackend> backend = std::make_shared<ScriptedBackend>();
  for (int i = 0; i < 3; ++i) backend->set_embedding(retrieval_text(train[i]), {float(i + 1), 1, 0, 2});
  auto counting = std::make_shared<CountingBackend>(backend);
  auto index = build_index(train, {counting, "emb"}, 2);
  CHECK(index.size() == 3);
  CHECK(index.dimension() == 4);
  CHECK(counting->embed_calls() == 2);
  for (std::size_t r = 0; r < 3; ++r) {
    double n = 0;
    for (float x : index.vector(r)) n += double(x) * x;
    CHECK(n == doctest::Approx(1.0));
  }

  auto ragged = std::make_shared<ScriptedBackend>();
  ragged->set_embedding(retrieval_text(train[0]), {1, 0, 0, 0});
  ragged->set_embedding(retrieval_text(train[1]), {1, 0, 0, 0, 0});
  ragged->set_embedding(retrieval_text(train[2]), {1, 0, 0, 0});
  CHECK_THROWS_AS(build_index(train, {ragged, "emb"}), Error);
}

TEST_CASE("retrieval text is entity-marked") {
  auto r = testing::make_instance("x", "Acme owns Beta", "Beta", "Acme", std::nullopt);
  CHECK(retrieval_text(r) == "<e2>Acme</e2> owns <e1>Beta</e1>");
}

TEST_CASE("query matches an exhaustive scan") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t dim = 1 + rng() % 16;
    const std::size_t n = 1 + rng() % 300;
    VectorIndex index;
    std::uniform_int_distribution<int> coarse(-2, 2);
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<float> v(dim);
      do {
        for (auto& x : v) x = static_cast<float>(coarse(rng));
      } while (std::all_of(v.begin(), v.end(), [](float x) { return x == 0; }));
      index.add("id" + std::to_string(rng() % 100000) + "-" + std::to_string(i), v);
    }
    std::vector<float> q(dim);
    for (auto& x : q) x = static_cast<float>(coarse(rng));
    q[0] = q[0] == 0 ? 1.0f : q[0];
    const std::size_t k = 1 + rng() % (n + 5);
    auto got = index.query(q, k);
    auto want = oracle(index, q, k);
    REQUIRE(got.size() == want.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
      CHECK(got[i].instance_id == want[i].instance_id);
      CHECK(got[i].similarity == want[i].similarity);
      CHECK(got[i].similarity <= 1.0 + 1e-9);
      CHECK(got[i].similarity >= -1.0 - 1e-9);
      if (i) CHECK(got[i].similarity <= got[i - 1].similarity);
    }
  }
}

TEST_CASE("save and load") {
  auto dir = testing::scratch_dir("index");
  VectorIndex index;
  index.add("x", vec({1, 2, 3}));
  index.add("y", vec({-1, 0, 4}));
  index.save(dir / "idx.bin");
  CHECK(std::filesystem::exists(dir / "idx.bin.ids"));
  auto loaded = VectorIndex::load(dir / "idx.bin");
  CHECK(loaded.ids() == index.ids());
  CHECK(loaded.dimension() == 3);
  for (std::size_t r = 0; r < 2; ++r) {
    auto a = index.vector(r);
    auto b = loaded.vector(r);
    CHECK(std::equal(a.begin(), a.end(), b.begin()));
  }
  std::ofstream(dir / "bad.bin") << "not an index";
  CHECK_THROWS_AS(VectorIndex::load(dir / "bad.bin"), Error);
}
