// Copyright 2026 The Noisetag Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "noisetag/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_set>

#include "noisetag/dsp.hpp"
#include "noisetag/error.hpp"
#include "noisetag/wav.hpp"

namespace fs = std::filesystem;

namespace noisetag::data {
namespace {

constexpr double kTwoPi = 6.28318530717958647692;

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

std::string strip_cr(std::string s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}

}  // namespace

TagVocabulary::TagVocabulary(std::vector<std::string> names)
    : names_(std::move(names)) {
  if (names_.size() != kNumClasses) {
    throw InvalidInputError("vocabulary must have exactly " +
                            std::to_string(kNumClasses) + " classes, got " +
                            std::to_string(names_.size()));
  }
  std::set<std::string> uniq(names_.begin(), names_.end());
  if (uniq.size() != names_.size()) {
    throw InvalidInputError("vocabulary has duplicate class names");
  }
  for (const auto& n : names_) {
    if (n.empty()) throw InvalidInputError("vocabulary has an empty name");
  }
}

const TagVocabulary& TagVocabulary::default_synthetic() {
  static const TagVocabulary vocab(std::vector<std::string>{
      "Bass_guitar", "Cello", "Acoustic_guitar", "Piano", "Marimba",
      "Harmonica", "Violin", "Trumpet", "Flute", "Glockenspiel",
      "Male_singing", "Female_singing"});
  return vocab;
}

TagVocabulary TagVocabulary::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open vocabulary file: " + path);
  std::vector<std::string> names;
  std::string line;
  while (std::getline(in, line)) {
    line = strip_cr(line);
    if (!line.empty()) names.push_back(line);
  }
  return TagVocabulary(std::move(names));
}

void TagVocabulary::save(const std::string& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write vocabulary file: " + path);
  for (const auto& n : names_) out << n << "\n";
}

const std::string& TagVocabulary::name(std::size_t idx) const {
  if (idx >= names_.size()) {
    throw InvalidInputError("tag index " + std::to_string(idx) +
                            " out of range");
  }
  return names_[idx];
}

std::optional<std::size_t> TagVocabulary::index_of(
    const std::string& name) const {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == name) return i;
  }
  return std::nullopt;
}

std::string source_name(Source s) {
  return s == Source::kCurated ? "curated" : "noisy";
}

Source parse_source(const std::string& s) {
  if (s == "curated") return Source::kCurated;
  if (s == "noisy") return Source::kNoisy;
  throw ParseError("unknown source marker: '" + s + "'");
}

std::string Manifest::resolve_audio_path(const ClipRecord& rec) const {
  const fs::path p(rec.audio_ref);
  if (p.is_absolute() || base_dir.empty()) return rec.audio_ref;
  return (fs::path(base_dir) / p).string();
}

Manifest load_manifest(const std::string& path, const TagVocabulary& vocab,
                       SplitRole role) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest: " + path);

  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty manifest: " + path);
  if (strip_cr(line) != "id,path,tags,source") {
    throw ParseError("manifest header must be 'id,path,tags,source': " + path);
  }

  Manifest m;
  m.split_role = role;
  m.base_dir = fs::path(path).parent_path().string();

  std::unordered_set<std::string> seen_ids;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    line = strip_cr(line);
    if (line.empty()) continue;
    const auto fields = split(line, ',');
    if (fields.size() != 4) {
      throw ParseError(path + " row " + std::to_string(row) +
                       ": expected 4 fields, got " +
                       std::to_string(fields.size()));
    }
    ClipRecord rec;
    rec.id = fields[0];
    rec.audio_ref = fields[1];
    if (rec.id.empty()) {
      throw ParseError(path + " row " + std::to_string(row) + ": empty id");
    }
    if (!seen_ids.insert(rec.id).second) {
      throw ParseError(path + " row " + std::to_string(row) +
                       ": duplicate id '" + rec.id + "'");
    }
    for (const auto& tag : split(fields[2], ';')) {
      const auto idx = vocab.index_of(tag);
      if (!idx) {
        throw ParseError(path + " row " + std::to_string(row) +
                         ": unknown tag '" + tag + "'");
      }
      rec.tags.push_back(*idx);
    }
    std::sort(rec.tags.begin(), rec.tags.end());
    rec.tags.erase(std::unique(rec.tags.begin(), rec.tags.end()),
                   rec.tags.end());
    if (rec.tags.empty()) {
      throw ParseError(path + " row " + std::to_string(row) +
                       ": clip '" + rec.id + "' has no tags");
    }
    try {
      rec.source = parse_source(fields[3]);
    } catch (const ParseError& e) {
      throw ParseError(path + " row " + std::to_string(row) + ": " + e.what());
    }
    if (role == SplitRole::kTest && rec.source != Source::kCurated) {
      throw ParseError(path + " row " + std::to_string(row) +
                       ": test manifests may only contain curated records");
    }
    m.records.push_back(std::move(rec));
  }
  return m;
}

void save_manifest(const std::string& path, const Manifest& m,
                   const TagVocabulary& vocab) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write manifest: " + path);
  out << "id,path,tags,source\n";
  for (const auto& rec : m.records) {
    out << rec.id << ',' << rec.audio_ref << ',';
    for (std::size_t i = 0; i < rec.tags.size(); ++i) {
      if (i > 0) out << ';';
      out << vocab.name(rec.tags[i]);
    }
    out << ',' << source_name(rec.source) << '\n';
  }
  if (!out) throw IoError("failed writing manifest: " + path);
}

LabelMatrix binarize(const Manifest& m, const TagVocabulary& vocab) {
  LabelMatrix lm;
  lm.rows = m.records.size();
  lm.cols = vocab.size();
  lm.values.assign(lm.rows * lm.cols, 0);
  for (std::size_t i = 0; i < m.records.size(); ++i) {
    for (std::size_t t : m.records[i].tags) {
      lm.values[i * lm.cols + t] = 1;
    }
  }
  return lm;
}

Manifest subsample(const Manifest& m, std::size_t n, Rng& rng) {
  if (n > m.records.size()) {
    throw InvalidInputError("subsample: n = " + std::to_string(n) +
                            " exceeds manifest size " +
                            std::to_string(m.records.size()));
  }
  std::vector<std::size_t> idx(m.records.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = i + rng.uniform_int(idx.size() - i);
    std::swap(idx[i], idx[j]);
  }
  idx.resize(n);
  std::sort(idx.begin(), idx.end());

  Manifest out;
  out.split_role = m.split_role;
  out.base_dir = m.base_dir;
  out.records.reserve(n);
  for (std::size_t i : idx) out.records.push_back(m.records[i]);
  return out;
}

double tag_stats(const Manifest& m) {
  if (m.records.empty()) {
    throw InvalidInputError("tag_stats: manifest is empty");
  }
  double total = 0.0;
  for (const auto& rec : m.records) total += static_cast<double>(rec.tags.size());
  return total / static_cast<double>(m.records.size());
}

// ---------------------------------------------------------------------------
// Synthetic corpus
// ---------------------------------------------------------------------------

namespace {

struct TimbreRecipe {
  double f0_base = 0.0;     // harmonic classes
  int n_partials = 0;
  double partial_decay = 1.0;
  bool odd_only = false;
  double attack_s = 0.01;
  bool plucked = false;
  double vibrato_hz = 0.0;
  double vibrato_depth = 0.0;
  bool noise_formants = false;  // singing-like classes
  double formant1 = 0.0, formant2 = 0.0;
};

// One recipe per vocabulary index; fundamentals are log-spaced so classes sit
// in distinct spectral registers.
const TimbreRecipe& recipe_for(std::size_t cls) {
  static const std::vector<TimbreRecipe> recipes = [] {
    std::vector<TimbreRecipe> r(TagVocabulary::kNumClasses);
    const double bases[10] = {60.0,  90.0,  135.0, 202.0, 304.0,
                              455.0, 683.0, 1025.0, 1537.0, 2306.0};
    for (int c = 0; c < 10; ++c) {
      r[c].f0_base = bases[c];
      r[c].n_partials = 10 - c / 2;
      // Every class gets a unique (register, brightness) pair.
      r[c].partial_decay = 0.4 + 0.18 * c;
      r[c].odd_only = (c % 3 == 1);
      r[c].attack_s = 0.004 + 0.012 * (c % 4);
      r[c].plucked = (c % 2 == 0);
      if (c % 4 == 1) {
        r[c].vibrato_hz = 5.5;
        r[c].vibrato_depth = 0.004;
      }
    }
    r[10].noise_formants = true;
    r[10].formant1 = 500.0;
    r[10].formant2 = 1200.0;
    r[11].noise_formants = true;
    r[11].formant1 = 950.0;
    r[11].formant2 = 2400.0;
    return r;
  }();
  return recipes[cls];
}

// RBJ constant-peak bandpass biquad.
struct Biquad {
  double b0, b1, b2, a1, a2;
  double z1 = 0.0, z2 = 0.0;

  Biquad(double freq, double q, double sample_rate) {
    const double w0 = kTwoPi * freq / sample_rate;
    const double alpha = std::sin(w0) / (2.0 * q);
    const double a0 = 1.0 + alpha;
    b0 = alpha / a0;
    b1 = 0.0;
    b2 = -alpha / a0;
    a1 = -2.0 * std::cos(w0) / a0;
    a2 = (1.0 - alpha) / a0;
  }

  double process(double x) {
    const double y = b0 * x + z1;
    z1 = b1 * x - a1 * y + z2;
    z2 = b2 * x - a2 * y;
    return y;
  }
};

void render_harmonic(const TimbreRecipe& rc, std::vector<double>& out,
                     Rng& rng) {
  const double sr = dsp::kSampleRate;
  std::size_t pos = 0;
  while (pos < out.size()) {
    const auto note_len = static_cast<std::size_t>(
        std::llround(rng.uniform(0.35, 0.7) * sr));
    const std::size_t end = std::min(out.size(), pos + note_len);
    const double f0 = rc.f0_base * std::pow(2.0, rng.uniform(-0.08, 0.08));

    int used = 0;
    double amps[16];
    double phases[16];
    int harmonics[16];
    for (int k = 1; used < rc.n_partials && used < 16; ++k) {
      const int h = rc.odd_only ? 2 * k - 1 : k;
      if (f0 * h > 7600.0) break;
      harmonics[used] = h;
      amps[used] = std::pow(static_cast<double>(h), -rc.partial_decay);
      phases[used] = rng.uniform(0.0, kTwoPi);
      ++used;
    }
    if (used == 0) {
      harmonics[0] = 1;
      amps[0] = 1.0;
      phases[0] = rng.uniform(0.0, kTwoPi);
      used = 1;
    }

    double base_phase = 0.0;
    for (std::size_t i = pos; i < end; ++i) {
      const double t = static_cast<double>(i - pos) / sr;
      double env = rc.attack_s > 0.0 ? std::min(1.0, t / rc.attack_s) : 1.0;
      if (rc.plucked) env *= std::exp(-t / 0.4);
      double f_inst = f0;
      if (rc.vibrato_hz > 0.0) {
        f_inst *= 1.0 + rc.vibrato_depth * std::sin(kTwoPi * rc.vibrato_hz * t);
      }
      base_phase += kTwoPi * f_inst / sr;
      double s = 0.0;
      for (int p = 0; p < used; ++p) {
        s += amps[p] * std::sin(base_phase * harmonics[p] + phases[p]);
      }
      out[i] += env * s;
    }
    pos = end;
  }
}

void render_noise_formants(const TimbreRecipe& rc, std::vector<double>& out,
                           Rng& rng) {
  const double sr = dsp::kSampleRate;
  Biquad f1(rc.formant1, 6.0, sr);
  Biquad f2(rc.formant2, 6.0, sr);

  // Syllable-like amplitude envelope over steady formant noise.
  std::size_t pos = 0;
  std::vector<double> env(out.size(), 0.0);
  while (pos < out.size()) {
    const auto syl = static_cast<std::size_t>(
        std::llround(rng.uniform(0.25, 0.55) * sr));
    const std::size_t end = std::min(out.size(), pos + syl);
    for (std::size_t i = pos; i < end; ++i) {
      const double t = static_cast<double>(i - pos) / sr;
      const double dur = static_cast<double>(end - pos) / sr;
      const double a = std::min(1.0, t / 0.03);
      const double r = std::min(1.0, (dur - t) / 0.05);
      env[i] = a * std::min(1.0, r);
    }
    pos = end;
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double x = rng.normal();
    const double t = static_cast<double>(i) / sr;
    const double vib = 1.0 + 0.25 * std::sin(kTwoPi * 5.5 * t);
    out[i] += (f1.process(x) + 0.7 * f2.process(x)) * 6.0 * env[i] * vib;
  }
}

void render_class(std::size_t cls, std::vector<double>& out, Rng& rng) {
  const auto& rc = recipe_for(cls);
  if (rc.noise_formants) {
    render_noise_formants(rc, out, rng);
  } else {
    render_harmonic(rc, out, rng);
  }
}

double rms(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s / static_cast<double>(v.size()));
}

dsp::Waveform render_clip(const std::vector<std::size_t>& tags, double dur_s,
                          bool add_background, Rng& rng) {
  const auto n =
      static_cast<std::size_t>(std::llround(dur_s * dsp::kSampleRate));
  std::vector<double> mix(n, 0.0);
  for (std::size_t i = 0; i < tags.size(); ++i) {
    std::vector<double> src(n, 0.0);
    render_class(tags[i], src, rng);
    const double g = i == 0 ? 1.0 : rng.uniform(0.5, 0.9);
    const double r = rms(src);
    const double norm = r > 1e-9 ? 0.1 / r : 0.0;
    for (std::size_t j = 0; j < n; ++j) mix[j] += src[j] * g * norm;
  }
  if (add_background) {
    const double target = rms(mix);  // 0 dB SNR
    for (std::size_t j = 0; j < n; ++j) mix[j] += rng.normal() * target;
  }
  double peak = 0.0;
  for (double x : mix) peak = std::max(peak, std::fabs(x));
  const double scale = peak > 0.9 ? 0.9 / peak : 1.0;

  dsp::Waveform w;
  w.sample_rate = dsp::kSampleRate;
  w.samples.resize(n);
  for (std::size_t j = 0; j < n; ++j) w.samples[j] = mix[j] * scale;
  return w;
}

struct SplitPlan {
  std::string id_prefix;
  int per_class;
  Source source;
  std::uint64_t stream_index;
};

Manifest generate_split(const SplitPlan& plan, const CorpusSpec& spec,
                        std::uint64_t seed, const fs::path& audio_dir,
                        const TagVocabulary& vocab) {
  Manifest m;
  std::size_t counter = 0;
  for (std::size_t cls = 0; cls < vocab.size(); ++cls) {
    for (int i = 0; i < plan.per_class; ++i, ++counter) {
      Rng rng(derive_seed(seed, Stream::kCorpus,
                          plan.stream_index * 1000003 + cls, i));

      std::vector<std::size_t> true_tags{cls};
      if (rng.uniform() < spec.two_tag_fraction) {
        const auto other =
            (cls + 1 + rng.uniform_int(vocab.size() - 1)) % vocab.size();
        true_tags.push_back(other);
      }
      const double dur = rng.uniform(spec.min_duration_s, spec.max_duration_s);
      const bool noisy = plan.source == Source::kNoisy;
      const dsp::Waveform w = render_clip(true_tags, dur, noisy, rng);

      char idbuf[32];
      std::snprintf(idbuf, sizeof(idbuf), "%s-%05zu", plan.id_prefix.c_str(),
                    counter);
      ClipRecord rec;
      rec.id = idbuf;
      rec.audio_ref = "audio/" + rec.id + ".wav";
      rec.source = plan.source;
      rec.tags = true_tags;

      // Synthetic label noise: the manifest lies about one tag while the
      // audio keeps its true content.
      if (noisy && rng.uniform() < spec.noisy_tag_flip_prob) {
        const std::size_t victim = rng.uniform_int(rec.tags.size());
        std::vector<std::size_t> complement;
        for (std::size_t c = 0; c < vocab.size(); ++c) {
          if (std::find(rec.tags.begin(), rec.tags.end(), c) ==
              rec.tags.end()) {
            complement.push_back(c);
          }
        }
        rec.tags[victim] = complement[rng.uniform_int(complement.size())];
      }
      std::sort(rec.tags.begin(), rec.tags.end());
      rec.tags.erase(std::unique(rec.tags.begin(), rec.tags.end()),
                     rec.tags.end());

      dsp::write_wav_pcm16((audio_dir / (rec.id + ".wav")).string(), w);
      m.records.push_back(std::move(rec));
    }
  }
  return m;
}

}  // namespace

CorpusPaths synth_corpus(const CorpusSpec& spec, std::uint64_t seed,
                         const std::string& out_dir) {
  if (spec.curated_train_per_class <= 0 || spec.test_per_class <= 0 ||
      spec.noisy_train_per_class < 0) {
    throw InvalidInputError("synth_corpus: per-class counts must be positive");
  }
  if (spec.min_duration_s < dsp::kFftSize / double(dsp::kSampleRate) ||
      spec.min_duration_s > spec.max_duration_s) {
    throw InvalidInputError("synth_corpus: invalid duration range");
  }

  const auto& vocab = TagVocabulary::default_synthetic();
  const fs::path root(out_dir);
  const fs::path audio = root / "audio";
  fs::create_directories(audio);

  CorpusPaths paths;
  paths.vocabulary = (root / "vocabulary.txt").string();
  vocab.save(paths.vocabulary);

  const SplitPlan curated_train{"trc", spec.curated_train_per_class,
                                Source::kCurated, 1};
  const SplitPlan noisy_train{"trn", spec.noisy_train_per_class,
                              Source::kNoisy, 2};
  const SplitPlan curated_test{"tst", spec.test_per_class, Source::kCurated,
                               3};

  Manifest train_curated =
      generate_split(curated_train, spec, seed, audio, vocab);
  train_curated.split_role = SplitRole::kTrain;
  paths.curated_train = (root / "train_curated.csv").string();
  save_manifest(paths.curated_train, train_curated, vocab);

  if (spec.noisy_train_per_class > 0) {
    Manifest train_noisy = generate_split(noisy_train, spec, seed, audio, vocab);
    train_noisy.split_role = SplitRole::kTrain;
    paths.noisy_train = (root / "train_noisy.csv").string();
    save_manifest(paths.noisy_train, train_noisy, vocab);
  }

  Manifest test = generate_split(curated_test, spec, seed, audio, vocab);
  test.split_role = SplitRole::kTest;
  paths.curated_test = (root / "test_curated.csv").string();
  save_manifest(paths.curated_test, test, vocab);

  return paths;
}

}  // namespace noisetag::data
