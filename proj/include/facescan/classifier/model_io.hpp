// Copyright 2026 The facescan Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Cascade model files (.fcc). Line-oriented text:
//
//   FACESCAN-CASCADE
//   version 1
//   feature_family haar|bbf
//   base_window 24
//   seed <u64>
//   meta <key> <value...>          (zero or more)
//   stages <n>
//   stage <index> <weak count> <threshold>
//   weak <haar kind> x y w h <threshold> <polarity> <alpha>
//   weak bbf ax ay aw ah bx by bw bh <threshold> <polarity> <alpha>
//   end
//
// Reals use the shortest decimal that round-trips, so save(load(s)) == s.

#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "facescan/classifier/cascade.hpp"
#include "facescan/common.hpp"

namespace facescan::classifier {

inline constexpr const char* kModelMagic = "FACESCAN-CASCADE";
inline constexpr int kModelVersion = 1;

inline std::string save_model(const Cascade& c) {
  std::ostringstream out;
  out << kModelMagic << '\n';
  out << "version " << kModelVersion << '\n';
  out << "feature_family " << to_string(c.family) << '\n';
  out << "base_window " << c.base_window << '\n';
  out << "seed " << c.seed << '\n';
  for (const auto& [k, v] : c.metadata) {
    if (k.empty() || k.find_first_of(" \n") != std::string::npos || v.find('\n') != std::string::npos)
      fail(ErrorCode::kInvalidArgument, "metadata keys must be single tokens, values single lines");
    out << "meta " << k << ' ' << v << '\n';
  }
  out << "stages " << c.stages.size() << '\n';
  for (std::size_t i = 0; i < c.stages.size(); ++i) {
    const auto& s = c.stages[i];
    out << "stage " << i << ' ' << s.weak.size() << ' ' << format_double(s.threshold) << '\n';
    for (const auto& w : s.weak) {
      out << "weak ";
      if (const auto* h = std::get_if<HaarFeature>(&w.feature)) {
        out << to_string(h->kind) << ' ' << h->rect.x << ' ' << h->rect.y << ' ' << h->rect.w << ' '
            << h->rect.h;
      } else {
        const auto& b = std::get<BBFFeature>(w.feature);
        out << "bbf " << b.rect_a.x << ' ' << b.rect_a.y << ' ' << b.rect_a.w << ' ' << b.rect_a.h
            << ' ' << b.rect_b.x << ' ' << b.rect_b.y << ' ' << b.rect_b.w << ' ' << b.rect_b.h;
      }
      out << ' ' << format_double(w.threshold) << ' ' << w.polarity << ' '
          << format_double(w.alpha) << '\n';
    }
  }
  out << "end\n";
  return out.str();
}

namespace detail {

inline std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream in(line);
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

class LineReader {
 public:
  explicit LineReader(const std::string& text) : in_(text) {}

  std::string next() {
    std::string line;
    if (!std::getline(in_, line)) fail(ErrorCode::kParse, "unexpected end of model");
    ++line_no_;
    return line;
  }

  std::vector<std::string> expect(const std::string& keyword, std::size_t fields) {
    const std::string line = next();
    auto tok = split_ws(line);
    if (tok.empty() || tok[0] != keyword || tok.size() != fields + 1)
      fail(ErrorCode::kParse, "line " + std::to_string(line_no_) + ": expected '" + keyword + "'");
    return tok;
  }

  int line_no() const { return line_no_; }

 private:
  std::istringstream in_;
  int line_no_ = 0;
};

inline int to_int(const std::string& s) { return static_cast<int>(parse_int(s)); }

}  // namespace detail

inline Cascade load_model(const std::string& text) {
  detail::LineReader r(text);
  if (r.next() != kModelMagic) fail(ErrorCode::kParse, "not a facescan cascade (bad magic)");
  const auto version = r.expect("version", 1);
  if (detail::to_int(version[1]) != kModelVersion)
    fail(ErrorCode::kParse, "unsupported model version " + version[1]);

  Cascade c;
  c.family = feature_family_from_string(r.expect("feature_family", 1)[1]);
  c.base_window = detail::to_int(r.expect("base_window", 1)[1]);
  if (c.base_window < 2) fail(ErrorCode::kParse, "bad base window");
  const std::string seed = r.expect("seed", 1)[1];
  {
    std::uint64_t v = 0;
    auto [p, ec] = std::from_chars(seed.data(), seed.data() + seed.size(), v);
    if (ec != std::errc() || p != seed.data() + seed.size()) fail(ErrorCode::kParse, "bad seed");
    c.seed = v;
  }

  std::string line = r.next();
  while (line.rfind("meta ", 0) == 0) {
    const auto key_end = line.find(' ', 5);
    if (key_end == std::string::npos) {
      c.metadata.emplace_back(line.substr(5), "");
    } else {
      c.metadata.emplace_back(line.substr(5, key_end - 5), line.substr(key_end + 1));
    }
    line = r.next();
  }
  auto tok = detail::split_ws(line);
  if (tok.size() != 2 || tok[0] != "stages") fail(ErrorCode::kParse, "expected 'stages'");
  const int n_stages = detail::to_int(tok[1]);
  if (n_stages < 1) fail(ErrorCode::kParse, "a cascade needs at least one stage");

  for (int i = 0; i < n_stages; ++i) {
    const auto st = r.expect("stage", 3);
    if (detail::to_int(st[1]) != i) fail(ErrorCode::kParse, "stage index out of order");
    const int n_weak = detail::to_int(st[2]);
    if (n_weak < 1) fail(ErrorCode::kParse, "a stage needs at least one weak classifier");
    CascadeStage stage;
    stage.threshold = parse_double(st[3]);
    for (int k = 0; k < n_weak; ++k) {
      const auto w = detail::split_ws(r.next());
      if (w.empty() || w[0] != "weak") fail(ErrorCode::kParse, "expected 'weak'");
      WeakClassifier wc;
      std::size_t at;
      if (w.size() >= 2 && w[1] == "bbf") {
        if (w.size() != 13) fail(ErrorCode::kParse, "bbf weak classifier needs 12 fields");
        BBFFeature f;
        f.base_window = c.base_window;
        f.rect_a = {detail::to_int(w[2]), detail::to_int(w[3]), detail::to_int(w[4]), detail::to_int(w[5])};
        f.rect_b = {detail::to_int(w[6]), detail::to_int(w[7]), detail::to_int(w[8]), detail::to_int(w[9])};
        if (!f.valid()) fail(ErrorCode::kParse, "bbf feature outside base window");
        wc.feature = f;
        at = 10;
      } else {
        if (w.size() != 9) fail(ErrorCode::kParse, "haar weak classifier needs 8 fields");
        HaarFeature f;
        f.base_window = c.base_window;
        f.kind = haar_kind_from_string(w[1]);
        f.rect = {detail::to_int(w[2]), detail::to_int(w[3]), detail::to_int(w[4]), detail::to_int(w[5])};
        if (!f.valid()) fail(ErrorCode::kParse, "haar feature outside base window");
        wc.feature = f;
        at = 6;
      }
      wc.threshold = parse_double(w[at]);
      wc.polarity = detail::to_int(w[at + 1]);
      if (wc.polarity != 1 && wc.polarity != -1) fail(ErrorCode::kParse, "polarity must be +-1");
      wc.alpha = parse_double(w[at + 2]);
      if (!(wc.alpha >= 0.0)) fail(ErrorCode::kParse, "alpha must be >= 0");
      stage.weak.push_back(std::move(wc));
    }
    c.stages.push_back(std::move(stage));
  }
  if (detail::split_ws(r.next()) != std::vector<std::string>{"end"})
    fail(ErrorCode::kParse, "expected 'end'");
  return c;
}

inline Cascade load_model_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open model " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return load_model(ss.str());
}

inline void save_model_file(const Cascade& c, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::kIo, "cannot write model " + path);
  out << save_model(c);
  if (!out) fail(ErrorCode::kIo, "write failed for " + path);
}

}  // namespace facescan::classifier
