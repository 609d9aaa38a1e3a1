#pragma once
#include <cstdint>
#include <string>
#include <vector>

namespace embforge {

// Synthetic corpus generator for end-to-end runs and benchmarks. Each topic
// gets disjoint query-side and document-side vocabularies plus a couple of
// anchor words shared between a query and its positive, so a bag-of-words
// model has real signal to learn and a lexical floor to start from. All
// tokens are 7 lowercase ASCII letters, which keeps the offline rewriter's
// length and script checks comfortably inside their bands.
struct FixtureConfig {
    std::string out_dir;
    uint64_t seed = 0;
    size_t topics = 40;
    size_t classes = 8;
    size_t qa_records = 350;
    size_t title_records = 350;
    size_t claims = 200;
    size_t sts_records = 250;
    size_t cls_records = 400;
    size_t eval_items = 60;
    size_t distractors_per_item = 9;
};

struct FixtureResult {
    std::vector<std::string> files; // paths written, in order
    std::string pipeline_config;    // path of pipeline.json
};

FixtureResult generate_fixtures(const FixtureConfig& cfg);

} // namespace embforge
