#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "kgverify/corpus.hpp"
#include "kgverify/kb.hpp"
#include "kgverify/llm_backend.hpp"
#include "kgverify/pipeline.hpp"
#include "kgverify/prompt_template.hpp"

namespace kgv::test {

/// splitmix64.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }
  /// Uniform in [lo, hi].
  int uniform(int lo, int hi) { return lo + static_cast<int>(next() % static_cast<std::uint64_t>(hi - lo + 1)); }
  bool chance(double p) { return static_cast<double>(next() >> 11) * 0x1.0p-53 < p; }
  template <class T>
  const T& pick(const std::vector<T>& v) {
    return v[static_cast<std::size_t>(uniform(0, static_cast<int>(v.size()) - 1))];
  }
  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[next() % i]);
  }

 private:
  std::uint64_t state_;
};

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "kgv");
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

std::string slurp(const std::filesystem::path& path);
void spit(const std::filesystem::path& path, const std::string& text);

Document make_doc(const std::string& id, const std::string& space_separated);
KnowledgeEntry kb_entry(std::string term, std::vector<std::string> definitions = {},
                        std::vector<std::string> semantic_types = {});
void write_kb_file(const std::filesystem::path& path, const KbIndex& kb);

/// Candidate surface of a type request ("\nEntity: X\nKnowledge about this entity:").
std::optional<std::string> type_request_entity(const ChatRequest& request);
bool is_context_request(const ChatRequest& request);
/// Text after the last "Paragraph: " up to the end of that line.
std::string request_paragraph(const ChatRequest& request);
/// Surfaces listed in a context request's candidate block, in order.
std::vector<std::string> request_candidates(const ChatRequest& request);

/// One worked single-entity example with its scripted LLM responses.
struct GoldenCase {
  std::string name;
  DatasetProfile profile = DatasetProfile::genia;
  Corpus corpus;
  KbIndex kb;
  /// Candidate surface -> type-verification response.
  std::map<std::string, std::string> evidence;
  /// Reasoning path responses by sample index.
  std::vector<std::string> paths;
  Entity expected;
};

GoldenCase leukocytes_case();
GoldenCase lymphocytes_case();
GoldenCase bupivacaine_case();
std::vector<GoldenCase> golden_cases();

std::unique_ptr<ScriptedBackend> golden_backend(const GoldenCase& c);
/// JSON-lines script equivalent to golden_backend, for the CLI.
std::string golden_script(const GoldenCase& c);

/// Config for a scripted fixture run. The script is only read when no
/// backend is passed to execute_run.
RunConfig fixture_config(DatasetProfile profile, const std::filesystem::path& kb_path,
                         const std::filesystem::path& script_path, const std::filesystem::path& out_dir);

using Responder = std::function<std::string(const ChatRequest&)>;

/// Knows the gold annotations: types gold surfaces with their gold label,
/// everything else None, and always picks the gold candidate.
Responder omniscient_responder(const Corpus& corpus);

struct SyntheticSuite {
  Corpus corpus;
  KbIndex kb;
  int alpha = 2;
  /// Predictions planted with no KB term in their window.
  std::vector<Entity> spurious;
};

/// Documents with well-separated golds, each perturbed by a prediction
/// (exact, type, span, type+span error, or two of them) that keeps
/// the gold inside the prediction's alpha-window. Every gold surface is a
/// KB key; filler words are sometimes KB distractors.
SyntheticSuite make_oracle_suite(std::uint64_t seed, int n_docs, int alpha = 2);

/// `n` predictions whose alpha-windows contain no KB surface; the same
/// documents also hold KB terms far away from them.
SyntheticSuite make_spurious_suite(std::uint64_t seed, int n, int alpha = 2);

/// Fraction of golds not inside the alpha-window of any overlapping prediction.
double fraction_outside_window(const Corpus& corpus, int alpha);

}  // namespace kgv::test
