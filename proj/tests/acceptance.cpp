// Acceptance checks; prints one PASS/FAIL line per criterion and exits
// nonzero when any fails.

#include <Eigen/Dense>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <unistd.h>

#include "mia/attack.hpp"
#include "mia/metrics.hpp"
#include "mia/ngram_oracle.hpp"
#include "mia/runner.hpp"
#include "mia/scoring.hpp"
#include "mia/synth.hpp"

namespace {

using namespace mia;
namespace fs = std::filesystem;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, a);
  return buf;
}

fs::path workdir() {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() / ("mia_acceptance_" + std::to_string(getpid()));
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

// 1. Identical, orthogonal and opposite vectors.
Outcome similarity_exactness() {
  EmbeddingTable t;
  t.insert("a", Eigen::Vector2d(1, 0));
  t.insert("b", Eigen::Vector2d(0, 1));
  t.insert("c", Eigen::Vector2d(-1, 0));
  t.insert("d", Eigen::Vector2d(3, 0));
  const double same = t.similarity("a", "a");
  const double parallel = t.similarity("a", "d");
  const double orth = t.similarity("a", "b");
  const double opp = t.similarity("a", "c");
  const bool ok = std::abs(same - 1.0) <= 1e-12 && std::abs(parallel - 1.0) <= 1e-12 &&
                  std::abs(orth - 0.5) <= 1e-12 && std::abs(opp) <= 1e-12;
  return {ok, "identical " + fmt("%.15g", same) + ", orthogonal " + fmt("%.15g", orth) +
                  ", opposite " + fmt("%.15g", opp)};
}

// 2. Exhaustive smoothing grid through empirical_score.
Outcome smoothing_arithmetic() {
  const auto target = tokenize_words("hit").at(0);
  std::size_t cases = 0;
  for (double alpha : {0.5, 1.0, 2.0}) {
    for (std::uint32_t n = 1; n <= 50; ++n) {
      for (std::uint32_t c = 0; c <= n; ++c) {
        std::vector<std::string> words(n, "miss");
        std::fill(words.begin(), words.begin() + c, "hit");
        const auto batch = make_batch("ctx", words, n, 0, "grid");
        const double v = empirical_score(target, batch, {alpha}).value;
        if (v != (c + alpha) / (n + 2 * alpha) || v <= 0.0 || v >= 1.0) {
          return {false, "mismatch at c=" + std::to_string(c) + " N=" + std::to_string(n)};
        }
        ++cases;
      }
    }
  }
  return {true, std::to_string(cases) + " grid points exact"};
}

// 3. Sampled semantic score against the exact expectation.
Outcome monte_carlo_convergence() {
  SynthConfig s;
  s.vocab_size = 999;
  s.documents = 200;
  s.seed = 3;
  auto corpus = generate_corpus(s);
  std::string all;
  for (std::size_t i = 0; i < s.vocab_size; ++i) all += pseudo_word(i) + " ";
  corpus.push_back(make_document("vocab", all, Label::member));
  auto oracle = std::make_shared<const NGramOracle>(NGramOracle::train(corpus, 3));
  OracleBackend backend(oracle);

  EmbeddingTable table;
  std::mt19937_64 rng(41);
  std::normal_distribution<double> g;
  for (const auto& w : oracle->vocabulary()) {
    Eigen::VectorXd v(16);
    for (auto& x : v) x = g(rng);
    table.insert(w, v);
  }

  int within = 0;
  for (int pair = 0; pair < 100; ++pair) {
    const auto& doc = corpus[rng() % s.documents];
    const std::size_t pos = 2 + rng() % (doc.length() - 1);
    const auto& target = doc.words[pos - 1];
    const auto context = prefix_of(doc, pos);
    const auto batch = backend.sample_next_words(context, 10000, rng());
    const double est = semantic_score(target, batch, table, false).value;
    const double exact =
        exact_expected_semantic(target, backend.next_word_distribution(context), table);
    double ss = 0.0;
    for (const auto& [w, c] : batch.samples) {
      const double d = word_similarity(target, w, table, false) - est;
      ss += c * d * d;
    }
    const double se = std::sqrt(ss / (batch.n_obtained - 1) / batch.n_obtained);
    if (std::abs(est - exact) <= 3 * se + 1e-12) ++within;
  }
  return {within >= 95, std::to_string(within) + "/100 pairs within 3 standard errors (vocab " +
                            std::to_string(oracle->vocab_size()) + ")"};
}

Benchmark synthetic_benchmark(std::size_t docs, std::uint64_t seed, std::size_t pool) {
  SynthConfig s;
  s.documents = docs;
  s.seed = seed;
  Benchmark b;
  b.name = "synth";
  b.documents = generate_corpus(s);
  reserve_prefix_pool(b, pool, 7);
  return b;
}

std::shared_ptr<const NGramOracle> train_on_members(const Benchmark& b, double lambda) {
  std::vector<Document> members;
  for (const auto& d : b.documents) {
    if (d.label == Label::member) members.push_back(d);
  }
  return std::make_shared<const NGramOracle>(NGramOracle::train(members, 3, lambda, 1.0));
}

double auc_of(const std::vector<MembershipScore>& scores) {
  std::vector<ScoreRow> rows;
  for (const auto& s : scores) rows.push_back({s.doc_id, s.label, s.score, s.valid});
  return build_report("x", rows).auc;
}

std::shared_ptr<const EmbeddingTable> random_vectors(std::size_t words, std::uint64_t seed) {
  auto table = std::make_shared<EmbeddingTable>();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  for (std::size_t i = 0; i < words; ++i) {
    Eigen::VectorXd v(8);
    for (auto& x : v) x = g(rng);
    table->insert(pseudo_word(i), v);
  }
  return table;
}

// 4. With no cache component, shots cannot change an order-3 prediction.
Outcome degenerate_invariant() {
  const auto bench = synthetic_benchmark(40, 1, 10);
  auto backend = std::make_shared<OracleBackend>(train_on_members(bench, 0.0));
  const auto table = random_vectors(SynthConfig{}.vocab_size, 8);
  AttackConfig c;
  c.method = Method::simmia;
  c.start_index = 4;
  c.exact_mode = true;
  const ShotSelection sel{ShotStrategy::fixed, 7, 0};
  double worst_exact = 0.0;
  for (const auto& s : Attack(backend, table, c).run(bench, sel)) {
    if (!s.valid) return {false, "invalid document " + s.doc_id};
    worst_exact = std::max(worst_exact, std::abs(s.score + 1.0));
  }
  c.exact_mode = false;
  c.n_samples = 200;
  double worst_sampled = 0.0;
  for (const auto& s : Attack(backend, table, c).run(bench, sel)) {
    if (!s.valid) return {false, "invalid document " + s.doc_id};
    worst_sampled = std::max(worst_sampled, std::abs(s.score + 1.0));
  }
  return {worst_exact == 0.0 && worst_sampled <= 0.05,
          "exact max |score+1| " + fmt("%.3g", worst_exact) + ", sampled N=200 max |score+1| " +
              fmt("%.4f", worst_sampled) + " over " + std::to_string(bench.documents.size()) +
              " documents"};
}

// 5. Desk-scale separation on the synthetic corpus.
Outcome separation() {
  const auto bench = synthetic_benchmark(400, 1, 10);
  auto backend = std::make_shared<OracleBackend>(train_on_members(bench, 0.3));
  const ShotSelection sel{ShotStrategy::fixed, 7, 0};
  AttackConfig star;
  star.method = Method::simmia_star;
  star.n_samples = 100;
  star.shots = 7;
  auto exact = star;
  exact.exact_mode = true;
  AttackConfig samia;
  samia.method = Method::samia;
  samia.n_samples = 100;
  samia.prefix_ratio = 0.5;
  const double auc_exact = auc_of(Attack(backend, nullptr, exact).run(bench, sel));
  const double auc_star = auc_of(Attack(backend, nullptr, star).run(bench, sel));
  const double auc_samia = auc_of(Attack(backend, nullptr, samia).run(bench, sel));
  return {auc_star >= 0.75 && auc_star > auc_samia,
          "SimMIA* exact-mode AUC " + fmt("%.4f", auc_exact) + ", sampled AUC " +
              fmt("%.4f", auc_star) + " (need >= 0.75), SaMIA AUC " + fmt("%.4f", auc_samia)};
}

// 6. Metrics against pair counting and a threshold sweep.
Outcome metrics_equivalence() {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 2 + rng() % 49;
    std::vector<double> s(n);
    std::vector<Label> l(n);
    const int levels = 1 + static_cast<int>(rng() % 10);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = static_cast<double>(rng() % levels) * 0.1;
      l[i] = (rng() & 1) ? Label::member : Label::non_member;
    }
    l[0] = Label::member;
    l[1] = Label::non_member;
    double wins = 0, pairs = 0, pos = 0, neg = 0;
    for (std::size_t i = 0; i < n; ++i) {
      (l[i] == Label::member ? pos : neg) += 1;
      for (std::size_t j = 0; j < n; ++j) {
        if (l[i] != Label::member || l[j] != Label::non_member) continue;
        pairs += 1;
        wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
      }
    }
    if (roc_auc(s, l) != wins / pairs) return {false, "AUC mismatch in trial " + std::to_string(trial)};
    for (double target : {0.0, 0.05, 0.2, 1.0}) {
      double best = 0.0;
      for (double t : std::set<double>(s.begin(), s.end())) {
        double tp = 0, fp = 0;
        for (std::size_t i = 0; i < n; ++i) {
          if (s[i] >= t) (l[i] == Label::member ? tp : fp) += 1;
        }
        if (fp / neg <= target) best = std::max(best, tp / pos);
      }
      if (tpr_at_fpr(s, l, target) != best) {
        return {false, "TPR mismatch in trial " + std::to_string(trial)};
      }
    }
  }
  return {true, "1000 random score sets agree exactly"};
}

// 7. Hand-computed ROUGE recall.
Outcome rouge_check() {
  struct Case {
    const char* candidate;
    const char* reference;
    int n;
    double expected;
  };
  const Case cases[] = {
      {"the cat sat down", "the cat ran away", 1, 2.0 / 4.0},
      {"a b c", "a b c", 1, 1.0},
      {"x y z", "a b c", 1, 0.0},
      {"the the the", "the cat the dog", 1, 2.0 / 4.0},
      {"cat", "the cat", 1, 1.0 / 2.0},
      {"", "one two", 1, 0.0},
      {"one two three four five", "five four", 1, 1.0},
      {"the cat sat", "the cat ran", 2, 1.0 / 2.0},
      {"a b a b", "a b a", 2, 2.0 / 2.0},
      {"Hello , World", "hello world !", 1, 2.0 / 3.0},
  };
  int ok = 0;
  for (const auto& c : cases) {
    std::vector<std::string> cand, ref;
    for (const auto& w : tokenize_words(c.candidate)) cand.push_back(w.folded);
    for (const auto& w : tokenize_words(c.reference)) ref.push_back(w.folded);
    if (rouge_n_recall(cand, ref, c.n) == c.expected) ++ok;
  }
  return {ok == 10, std::to_string(ok) + "/10 pairs exact"};
}

// Small benchmark files shared by the HTTP and replay criteria.
struct PipelineFiles {
  fs::path corpus, members, vectors;
};

PipelineFiles pipeline_files() {
  PipelineFiles f{workdir() / "pipeline.jsonl", workdir() / "members.jsonl", workdir() / "vectors.txt"};
  SynthConfig s;
  s.documents = 60;
  s.min_words = 40;
  s.max_words = 60;
  const auto docs = generate_corpus(s);
  write_corpus_jsonl(docs, f.corpus);
  std::vector<Document> members;
  for (const auto& d : docs) {
    if (d.label == Label::member) members.push_back(d);
  }
  write_corpus_jsonl(members, f.members);
  std::ofstream out(f.vectors);
  const auto table = random_vectors(s.vocab_size, 8);
  for (const auto& w : table->words()) {
    out << w;
    const auto v = *table->vector(w);
    for (Eigen::Index k = 0; k < v.size(); ++k) out << ' ' << v(k);
    out << '\n';
  }
  return f;
}

RunConfig pipeline_config(const PipelineFiles& f) {
  RunConfig c;
  c.attack.method = Method::simmia;
  c.attack.n_samples = 100;
  c.attack.shots = 7;
  c.attack.master_seed = 11;
  c.dataset.path = f.corpus.string();
  c.dataset.pool_size = 10;
  c.dataset.pool_seed = 7;
  c.backend.oracle.corpus = f.members.string();
  c.backend.oracle.lambda = 0.3;
  c.embeddings.path = f.vectors.string();
  return c;
}

// Runs `miaudit mock-serve` as a child process and reads its bound address.
class MockServeProcess {
 public:
  explicit MockServeProcess(const PipelineFiles& f) {
    int fds[2];
    if (pipe(fds) != 0) throw std::runtime_error("pipe failed");
    pid_ = fork();
    if (pid_ == 0) {
      dup2(fds[1], STDOUT_FILENO);
      close(fds[0]);
      close(fds[1]);
      execl(MIAUDIT_PATH, MIAUDIT_PATH, "mock-serve", "--corpus", f.members.c_str(), "--order",
            "3", "--lambda", "0.3", "--port", "0", static_cast<char*>(nullptr));
      _exit(127);
    }
    close(fds[1]);
    FILE* out = fdopen(fds[0], "r");
    char line[512];
    while (std::fgets(line, sizeof(line), out) != nullptr) {
      const std::string s(line);
      if (s.rfind("listening on ", 0) == 0) url_ = s.substr(13, s.find_last_not_of("\r\n") - 12);
      if (s.rfind("oracle_digest ", 0) == 0) break;
    }
    out_ = out;
    if (url_.empty()) throw std::runtime_error("mock-serve did not report an address");
  }
  ~MockServeProcess() {
    kill(pid_, SIGTERM);
    waitpid(pid_, nullptr, 0);
    if (out_ != nullptr) std::fclose(out_);
  }
  const std::string& url() const { return url_; }

 private:
  pid_t pid_ = -1;
  FILE* out_ = nullptr;
  std::string url_;
};

// 8. Same digest through the HTTP mock as in-process.
Outcome http_parity() {
  const auto files = pipeline_files();
  auto local = pipeline_config(files);
  const auto in_process = run_attack(local);

  MockServeProcess server(files);
  auto remote = pipeline_config(files);
  remote.backend.type = "http";
  remote.backend.http.base_url = server.url();
  remote.backend.http.model = "mock";
  const auto over_http = run_attack(remote);
  return {in_process.digest == over_http.digest && !in_process.digest.empty(),
          "in-process " + in_process.digest.substr(0, 16) + ", http " +
              over_http.digest.substr(0, 16) + " (AUC " + fmt("%.4f", in_process.report.auc) + ")"};
}

// 9. Replay-only rerun over a warm cache.
Outcome replay_reproducibility() {
  const auto files = pipeline_files();
  auto first = pipeline_config(files);
  first.cache.dir = (workdir() / "cache").string();
  const auto warm = run_attack(first);
  auto second = first;
  second.cache.replay_only = true;
  const auto replay = run_attack(second);
  const auto requests = replay.ledger.total().requests;
  return {warm.digest == replay.digest && requests == 0 && replay.ledger.total().cached_hits > 0,
          "digests " + std::string(warm.digest == replay.digest ? "equal" : "differ") +
              ", replay backend requests " + std::to_string(requests) + ", cache hits " +
              std::to_string(replay.ledger.total().cached_hits)};
}

// 10. Spread over reruns: fixed shots against re-drawn random shots.
Outcome stability() {
  const auto path = workdir() / "synth400.jsonl";
  SynthConfig s;
  write_corpus_jsonl(generate_corpus(s), path);
  RunConfig c;
  c.attack.method = Method::simmia_star;
  c.attack.n_samples = 100;
  c.attack.shots = 7;
  c.dataset.path = path.string();
  c.dataset.pool_size = 10;
  c.dataset.pool_seed = 7;
  c.backend.oracle.lambda = 0.3;
  const auto fixed = run_stability(c, 5, false);
  const auto random = run_stability(c, 5, true);
  return {fixed.stddev < random.stddev,
          "fixed shots AUC " + fmt("%.4f", fixed.mean) + " +/- " + fmt("%.4f", fixed.stddev) +
              ", random shots " + fmt("%.4f", random.mean) + " +/- " + fmt("%.4f", random.stddev)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"similarity exactness", similarity_exactness},
      {"smoothing arithmetic", smoothing_arithmetic},
      {"Monte-Carlo convergence", monte_carlo_convergence},
      {"degenerate relative score", degenerate_invariant},
      {"desk-scale separation", separation},
      {"metrics oracle equivalence", metrics_equivalence},
      {"ROUGE recall", rouge_check},
      {"HTTP parity", http_parity},
      {"replay reproducibility", replay_reproducibility},
      {"stability protocol", stability},
  };
  // Optional arguments select criteria by number.
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

  int failed = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    const int number = static_cast<int>(k) + 1;
    if (!only.empty() && only.count(number) == 0) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[k].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("criterion %2d %-28s %s  %s [%.1fs]\n", number, criteria[k].first,
                o.pass ? "PASS" : "FAIL", o.detail.c_str(), seconds);
    std::fflush(stdout);
    failed += o.pass ? 0 : 1;
  }
  fs::remove_all(workdir());
  return failed == 0 ? 0 : 1;
}
