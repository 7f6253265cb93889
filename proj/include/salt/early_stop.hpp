#pragma once

#include <algorithm>
#include <vector>

namespace salt {

struct EarlyStopResult {
    int best_epoch = 0; // 1-based epoch of the best validation loss
    int stop_epoch = 0; // 1-based epoch after which training stops
    bool stopped_early = false;
};

// Plateau rule: stop once the validation loss has failed to improve on the
// best seen value by at least min_delta for `patience` consecutive epochs.
inline EarlyStopResult early_stop(const std::vector<double>& val_losses, int patience = 5,
                                  double min_delta = 1e-4, int max_epochs = 100) {
    EarlyStopResult r;
    double best = 0.0;
    int bad = 0;
    const int limit = std::min<int>(static_cast<int>(val_losses.size()), max_epochs);
    for (int e = 1; e <= limit; ++e) {
        const double loss = val_losses[static_cast<size_t>(e - 1)];
        if (r.best_epoch == 0 || loss < best - min_delta) {
            best = loss;
            r.best_epoch = e;
            bad = 0;
        } else {
            ++bad;
        }
        r.stop_epoch = e;
        if (bad >= patience) {
            r.stopped_early = true;
            return r;
        }
    }
    return r;
}

} // namespace salt
