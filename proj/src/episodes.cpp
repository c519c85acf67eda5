#include "mastaf/episodes.hpp"

#include <numeric>
#include <string>

#include "mastaf/errors.hpp"

namespace mastaf {
namespace {

// First `count` entries of `items` become a uniform sample without replacement.
template <typename V>
void partial_shuffle(std::vector<V>& items, std::size_t count, std::mt19937_64& rng) {
  for (std::size_t i = 0; i < count; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, items.size() - 1);
    std::swap(items[i], items[pick(rng)]);
  }
}

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

}  // namespace

void EpisodeSpec::validate() const {
  if (ways < 2) throw ConfigError("ways must be >= 2, got " + std::to_string(ways));
  if (shots < 1) throw ConfigError("shots must be >= 1");
  if (queries < 1) throw ConfigError("queries must be >= 1");
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  return splitmix(splitmix(splitmix(seed) ^ a) ^ b);
}

Episode sample_episode(const Dataset& dataset, const EpisodeSpec& spec, std::mt19937_64& rng) {
  spec.validate();
  std::vector<std::size_t> eligible;
  for (std::size_t c = 0; c < dataset.num_classes(); ++c) {
    if (dataset.samples[c].size() >= spec.shots) eligible.push_back(c);
  }
  if (eligible.size() < spec.ways) {
    throw CapacityError("episode needs " + std::to_string(spec.ways) + " classes with >= " +
                        std::to_string(spec.shots) + " samples, dataset has " +
                        std::to_string(eligible.size()));
  }
  partial_shuffle(eligible, spec.ways, rng);
  eligible.resize(spec.ways);

  // Queries: class uniform among chosen classes that still have a spare sample.
  std::vector<std::size_t> used(spec.ways, spec.shots);
  std::vector<std::size_t> query_labels;
  for (std::size_t q = 0; q < spec.queries; ++q) {
    std::vector<std::size_t> hosts;
    for (std::size_t c = 0; c < spec.ways; ++c) {
      if (dataset.samples[eligible[c]].size() > used[c]) hosts.push_back(c);
    }
    if (hosts.empty()) {
      throw CapacityError("query " + std::to_string(q) + " needs a class with >= " +
                          std::to_string(spec.shots + 1) +
                          " samples among the sampled classes; none has a spare sample");
    }
    std::uniform_int_distribution<std::size_t> pick(0, hosts.size() - 1);
    const std::size_t c = hosts[pick(rng)];
    query_labels.push_back(c);
    ++used[c];
  }

  Episode ep;
  ep.support.resize(spec.ways);
  std::vector<std::vector<std::size_t>> order(spec.ways);
  for (std::size_t c = 0; c < spec.ways; ++c) {
    const auto& pool = dataset.samples[eligible[c]];
    order[c].resize(pool.size());
    std::iota(order[c].begin(), order[c].end(), std::size_t{0});
    partial_shuffle(order[c], used[c], rng);
    for (std::size_t k = 0; k < spec.shots; ++k) ep.support[c].push_back(&pool[order[c][k]]);
    ep.class_ids.push_back(dataset.manifest.classes[eligible[c]].id);
    ep.class_positions.push_back(eligible[c]);
  }
  std::vector<std::size_t> next(spec.ways, spec.shots);
  for (std::size_t c : query_labels) {
    ep.queries.push_back(&dataset.samples[eligible[c]][order[c][next[c]++]]);
  }
  ep.query_labels = std::move(query_labels);
  return ep;
}

}  // namespace mastaf
