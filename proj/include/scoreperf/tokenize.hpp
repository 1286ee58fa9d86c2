#pragma once

#include <string>
#include <vector>

#include "scoreperf/notes.hpp"
#include "scoreperf/vocab.hpp"

namespace scoreperf {

enum class TokenLayout { score_input, perf_input, score_output, perf_output };

const char* to_string(TokenLayout layout);
TokenLayout layout_from_string(const std::string& s);

// Attribute vocabularies for a layout, in stream order.
const std::vector<Vocabulary>& layout_vocabs(const TokenizerManifest& m, TokenLayout layout);

struct TokenSequence {
    TokenLayout layout = TokenLayout::score_input;
    std::string manifest; // manifest hash the ids were produced under

    // Parallel layouts: streams[attribute][note]. Flat layout: events.
    std::vector<std::vector<int>> streams;
    std::vector<int> events;

    std::size_t note_count() const { return streams.empty() ? 0 : streams[0].size(); }
    std::size_t event_count() const { return events.size(); }
    bool parallel() const { return layout != TokenLayout::perf_output; }
};

TokenSequence encode_score_input(const NoteSequence& seq);
TokenSequence encode_perf_input(const NoteSequence& seq);
TokenSequence encode_score_output(const NoteSequence& seq);
TokenSequence encode_perf_output(const NoteSequence& seq);

// Inverse mapping: bin centers for quantized attributes, exact for enum
// fields. Preserves token order; does not re-sort.
NoteSequence decode(const TokenSequence& tokens);

// Text round-trip: header "scoreperf-tokens v1 layout=... manifest=... n=...",
// then one note-tuple (parallel) or one event id (flat) per line.
std::string format_tokens(const TokenSequence& tokens);
TokenSequence parse_tokens(const std::string& text);
void save_tokens(const std::string& path, const TokenSequence& tokens);
TokenSequence load_tokens(const std::string& path);

} // namespace scoreperf
