#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

namespace ocufuse::core {

enum class Modality { gaze, periocular, fused };

std::string to_string(Modality m);
Modality modality_from_string(const std::string& s);

// One fixed-length embedding tied to (subject, session, modality, chunk).
// chunk is the window index for gaze and the image index for periocular.
struct EmbeddingRecord {
  std::string subject;
  std::string session;
  Modality modality = Modality::gaze;
  std::size_t chunk = 0;
  std::vector<double> vector;
};

// Validated, indexed collection of embedding records. All vectors within a
// modality share one dimension; (subject, session, modality, chunk) is
// unique; no coordinate is NaN or infinite. Immutable once built except via
// add(), which enforces every invariant.
class EmbeddingSet {
 public:
  using Key = std::tuple<std::string, std::string, Modality>;

  void add(EmbeddingRecord rec);

  const std::vector<EmbeddingRecord>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }

  // Records for (subject, session, modality), sorted by chunk index.
  std::vector<const EmbeddingRecord*> find(const std::string& subject,
                                           const std::string& session,
                                           Modality modality) const;

  std::set<std::string> subjects() const;
  std::set<std::string> subjects(Modality modality) const;

  // Sorted distinct session ids for one subject and modality.
  std::vector<std::string> sessions(const std::string& subject, Modality modality) const;

  // Embedding dimension for a modality; 0 when no record of it exists.
  std::size_t dim(Modality modality) const;

  const std::map<Key, std::vector<std::size_t>>& index() const { return index_; }

 private:
  std::vector<EmbeddingRecord> records_;
  std::map<Key, std::vector<std::size_t>> index_;
  std::map<Modality, std::size_t> dims_;
};

// Disjoint halves of a subject pool; sizes differ by at most one and part_a
// receives the extra subject when the pool is odd.
struct SubjectSplit {
  std::set<std::string> part_a;
  std::set<std::string> part_b;
  std::uint64_t seed = 0;
};

// Reads a JSON-Lines embedding file:
//   {"subject": "...", "session": "...", "modality": "gaze", "chunk": 0, "vector": [...]}
// Blank lines are forbidden. When expected_modality is given, every record
// must carry it.
EmbeddingSet load_embeddings(const std::filesystem::path& path,
                             std::optional<Modality> expected_modality = std::nullopt);

// Writes one record per line with coordinates at 17 significant decimal
// digits, so load(save(x)) reproduces x bit for bit.
void save_embeddings(const EmbeddingSet& set, const std::filesystem::path& path);

// Seeded shuffle of the lexicographically sorted ids, split down the middle.
// Deterministic across runs and platforms for a fixed (subjects, seed).
SubjectSplit split_subjects(const std::set<std::string>& subjects, std::uint64_t seed);

}  // namespace ocufuse::core
