#include "ocufuse/core.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "ocufuse/error.hpp"
#include "ocufuse/rng.hpp"

namespace ocufuse::core {

std::string to_string(Modality m) {
  switch (m) {
    case Modality::gaze: return "gaze";
    case Modality::periocular: return "periocular";
    case Modality::fused: return "fused";
  }
  throw argument_error("unknown modality value");
}

Modality modality_from_string(const std::string& s) {
  if (s == "gaze") return Modality::gaze;
  if (s == "periocular") return Modality::periocular;
  if (s == "fused") return Modality::fused;
  throw schema_error("unknown modality \"" + s + "\"");
}

void EmbeddingSet::add(EmbeddingRecord rec) {
  if (rec.vector.empty()) {
    throw schema_error("record (" + rec.subject + ", " + rec.session + ") has an empty vector");
  }
  for (double x : rec.vector) {
    if (!std::isfinite(x)) {
      throw data_error("record (" + rec.subject + ", " + rec.session + ", " +
                       to_string(rec.modality) + ", chunk " + std::to_string(rec.chunk) +
                       ") contains a non-finite coordinate");
    }
  }
  auto [it, inserted] = dims_.try_emplace(rec.modality, rec.vector.size());
  if (!inserted && it->second != rec.vector.size()) {
    throw schema_error("modality " + to_string(rec.modality) + " mixes dimensions " +
                       std::to_string(it->second) + " and " + std::to_string(rec.vector.size()));
  }
  auto& positions = index_[Key{rec.subject, rec.session, rec.modality}];
  for (std::size_t pos : positions) {
    if (records_[pos].chunk == rec.chunk) {
      throw data_error("duplicate record (" + rec.subject + ", " + rec.session + ", " +
                       to_string(rec.modality) + ", chunk " + std::to_string(rec.chunk) + ")");
    }
  }
  positions.push_back(records_.size());
  records_.push_back(std::move(rec));
}

std::vector<const EmbeddingRecord*> EmbeddingSet::find(const std::string& subject,
                                                       const std::string& session,
                                                       Modality modality) const {
  std::vector<const EmbeddingRecord*> out;
  auto it = index_.find(Key{subject, session, modality});
  if (it == index_.end()) return out;
  out.reserve(it->second.size());
  for (std::size_t pos : it->second) out.push_back(&records_[pos]);
  std::sort(out.begin(), out.end(),
            [](const EmbeddingRecord* a, const EmbeddingRecord* b) { return a->chunk < b->chunk; });
  return out;
}

std::set<std::string> EmbeddingSet::subjects() const {
  std::set<std::string> out;
  for (const auto& [key, positions] : index_) out.insert(std::get<0>(key));
  return out;
}

std::set<std::string> EmbeddingSet::subjects(Modality modality) const {
  std::set<std::string> out;
  for (const auto& [key, positions] : index_) {
    if (std::get<2>(key) == modality) out.insert(std::get<0>(key));
  }
  return out;
}

std::vector<std::string> EmbeddingSet::sessions(const std::string& subject,
                                                Modality modality) const {
  std::set<std::string> found;
  for (const auto& [key, positions] : index_) {
    if (std::get<0>(key) == subject && std::get<2>(key) == modality) {
      found.insert(std::get<1>(key));
    }
  }
  return {found.begin(), found.end()};
}

std::size_t EmbeddingSet::dim(Modality modality) const {
  auto it = dims_.find(modality);
  return it == dims_.end() ? 0 : it->second;
}

EmbeddingSet load_embeddings(const std::filesystem::path& path,
                             std::optional<Modality> expected_modality) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open " + path.string());

  EmbeddingSet set;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    if (line.empty()) throw parse_error(where + ": blank line");

    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw parse_error(where + ": " + e.what());
    }
    if (!obj.is_object()) throw parse_error(where + ": expected a JSON object");

    EmbeddingRecord rec;
    try {
      rec.subject = obj.at("subject").get<std::string>();
      rec.session = obj.at("session").get<std::string>();
      rec.modality = modality_from_string(obj.at("modality").get<std::string>());
      const auto chunk = obj.at("chunk").get<std::int64_t>();
      if (chunk < 0) throw schema_error("negative chunk index");
      rec.chunk = static_cast<std::size_t>(chunk);
      const auto& vec = obj.at("vector");
      if (!vec.is_array()) throw schema_error("\"vector\" is not an array");
      rec.vector.reserve(vec.size());
      for (const auto& v : vec) {
        if (!v.is_number()) throw schema_error("non-numeric vector entry");
        rec.vector.push_back(v.get<double>());
      }
    } catch (const nlohmann::json::exception& e) {
      throw schema_error(where + ": " + e.what());
    } catch (const validation_error& e) {
      throw schema_error(where + ": " + e.what());
    }

    if (expected_modality && rec.modality != *expected_modality) {
      throw schema_error(where + ": modality " + to_string(rec.modality) + " where " +
                         to_string(*expected_modality) + " was expected");
    }
    try {
      set.add(std::move(rec));
    } catch (const validation_error& e) {
      throw schema_error(where + ": " + e.what());
    }
  }
  return set;
}

void save_embeddings(const EmbeddingSet& set, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw io_error("cannot write " + path.string());

  char buf[64];
  for (const auto& rec : set.records()) {
    std::string line = "{\"subject\":";
    line += nlohmann::json(rec.subject).dump();
    line += ",\"session\":";
    line += nlohmann::json(rec.session).dump();
    line += ",\"modality\":\"";
    line += to_string(rec.modality);
    line += "\",\"chunk\":";
    line += std::to_string(rec.chunk);
    line += ",\"vector\":[";
    for (std::size_t i = 0; i < rec.vector.size(); ++i) {
      if (i > 0) line += ',';
      // 17 significant digits: lossless for 64-bit doubles.
      std::snprintf(buf, sizeof buf, "%.17g", rec.vector[i]);
      line += buf;
    }
    line += "]}";
    out << line << '\n';
  }
  if (!out) throw io_error("write failed for " + path.string());
}

SubjectSplit split_subjects(const std::set<std::string>& subjects, std::uint64_t seed) {
  if (subjects.size() < 2) {
    throw argument_error("split_subjects needs at least 2 subjects, got " +
                         std::to_string(subjects.size()));
  }
  std::vector<std::string> ids(subjects.begin(), subjects.end());  // already sorted
  SeededRng rng(seed);
  rng.shuffle(ids);

  SubjectSplit split;
  split.seed = seed;
  const std::size_t half = (ids.size() + 1) / 2;  // part_a gets the extra
  split.part_a.insert(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(half));
  split.part_b.insert(ids.begin() + static_cast<std::ptrdiff_t>(half), ids.end());
  return split;
}

}  // namespace ocufuse::core
