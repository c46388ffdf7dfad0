// Regenerates the frozen regression values under tests/golden.
// Run only after an intentional change to training, sampling or scoring.

#include <cstdio>
#include <fstream>
#include <string>

#include <json.hpp>

#include "fgns/checksum.hpp"
#include "fgns/classifier.hpp"
#include "fgns/feature_catalog.hpp"
#include "fgns/segmentation.hpp"
#include "test_support.hpp"

using namespace fgns;
using namespace fgns::testing;

int main(int argc, char** argv) {
    const std::filesystem::path dir = argc > 1 ? argv[1] : FGNS_GOLDEN_DIR;
    std::filesystem::create_directories(dir);

    {
        std::vector<Image> images;
        std::vector<int> labels;
        for (std::size_t i = 0; i < 9000; ++i) {
            images.emplace_back(i, Shape{1, 1});
            labels.push_back(i % 3 == 2 ? 0 : 4);
        }
        LabeledDataset ds(std::move(images), std::move(labels), Split::train, "pinned");
        std::string s;
        for (const auto& img : sample_class(ds, 4, 1000, 7)) s += std::to_string(img.id) + ",";
        std::ofstream(dir / "sample_class_n1000_seed7.sha256") << sha256_hex(s) << "\n";
    }
    {
        auto ds = banded_dataset(4, 25, 13);
        TrainingConfig cfg;
        cfg.hidden = 16;
        cfg.epochs = 3;
        auto m = train(ds, cfg, 2024);
        Image probe(0, Shape{});
        for (int r = 0; r < 28; ++r)
            for (int c = 0; c < 28; ++c) probe.at(r, c) = ((r * 28 + c) % 17) / 16.0;
        std::ofstream(dir / "pinned_probabilities.json") << nlohmann::json(m.predict_proba(probe)).dump() << "\n";
    }
    {
        auto ds = banded_dataset(4, 100, 21);
        TrainingConfig tc;
        tc.hidden = 16;
        tc.epochs = 2;
        auto m = train(ds, tc, 5);
        auto seg = grid_segmentation(28, 28, 4);
        BinaryMask mask = seg.mask_of(8);
        for (auto p : seg.pixels_of(9)) mask.bits[p] = 1;
        auto samples = sample_class(ds, 1, 100, 3);
        auto full = sage_score(m, mask, samples, 1, EarlyStopPolicy{false});
        std::ofstream(dir / "pinned_sage.json") << nlohmann::json{{"score", full.score}, {"n", full.n_used}}.dump() << "\n";
    }
    std::printf("golden files written to %s\n", dir.string().c_str());
    return 0;
}
