// Compares the serial reference implementations against the OpenMP-parallel
// paths for corpus synthesis and sample generation, plus mixture packing.
//
//   ./bench_pipeline [videos_per_class]   (default 2000)

#include "modfactory/corpus.hpp"
#include "modfactory/datagen.hpp"
#include "modfactory/guideline.hpp"
#include "modfactory/mixture.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

using namespace modfactory;

namespace {

double now_seconds() {
    return std::chrono::duration<double>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

template <typename F>
double time_best_of(int reps, F&& f) {
    double best = 1e30;
    for (int i = 0; i < reps; ++i) {
        double t0 = now_seconds();
        f();
        best = std::min(best, now_seconds() - t0);
    }
    return best;
}

void row(const char* name, double serial_s, double parallel_s,
         std::size_t items) {
    std::printf("%-20s %10.3fs %12.3fs %9.2fx %12.0f/s\n", name, serial_s,
                parallel_s, serial_s / parallel_s,
                static_cast<double>(items) / parallel_s);
}

}  // namespace

int main(int argc, char** argv) {
    const int per_class = argc > 1 ? std::atoi(argv[1]) : 2000;
    auto guidelines = guideline::load_guideline_set(
        std::string(MODFACTORY_SOURCE_DIR) + "/data/guidelines/moderation.gl");

    corpus::CorpusSpec spec;
    spec.pretrain_pos = per_class;
    spec.pretrain_neg = per_class;
    spec.seed = 1;

#ifdef _OPENMP
    std::printf("OpenMP enabled, max threads: %d\n", omp_get_max_threads());
#else
    std::printf("OpenMP disabled; parallel paths fall back to serial\n");
#endif
    std::printf("%-20s %11s %13s %10s %13s\n", "step", "serial", "parallel",
                "speedup", "throughput");

    std::vector<corpus::VideoRecord> records;
    double corpus_serial = time_best_of(3, [&] {
        records = corpus::generate_synthetic_corpus(guidelines, spec,
                                                    /*parallel=*/false);
    });
    double corpus_parallel = time_best_of(3, [&] {
        records = corpus::generate_synthetic_corpus(guidelines, spec,
                                                    /*parallel=*/true);
    });
    row("corpus synthesis", corpus_serial, corpus_parallel, records.size());

    annotator::MockAnnotatorConfig mcfg;
    mcfg.flip_rate = 0.1;
    mcfg.seed = 2;
    annotator::MockAnnotator mock(mcfg, guidelines, records);
    auto templates = datagen::TemplateSet::defaults();
    datagen::Provenance prov{"mock", "1970-01-01T00:00:00Z", "1"};

    datagen::GenerationResult result;
    double gen_serial = time_best_of(2, [&] {
        datagen::GenerationConfig gen;
        gen.parallelism = 1;
        result = datagen::generate_all(records, guidelines, mock, templates, gen,
                                       prov);
    });
    double gen_parallel = time_best_of(2, [&] {
        datagen::GenerationConfig gen;
#ifdef _OPENMP
        gen.parallelism = omp_get_max_threads();
#else
        gen.parallelism = 1;
#endif
        result = datagen::generate_all(records, guidelines, mock, templates, gen,
                                       prov);
    });
    row("sample generation", gen_serial, gen_parallel, result.samples.size());

    datagen::consistency_filter(result.samples, records);
    std::vector<mixture::PackInput> inputs;
    inputs.reserve(result.samples.size());
    for (auto& s : result.samples) inputs.push_back({std::move(s), 0});
    auto stage = mixture::build_stage_plan(mixture::Strategy::mix_all).stages[0];
    double pack_time = time_best_of(3, [&] {
        mixture::pack_mixture(inputs, stage, 3);
    });
    std::printf("%-20s %10.3fs %12s %10s %12.0f/s\n", "mixture packing",
                pack_time, "-", "-",
                static_cast<double>(inputs.size()) / pack_time);
    return 0;
}
