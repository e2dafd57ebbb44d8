#include <cmath>

#include "popmon/cmpp.hpp"

namespace popmon {

const CachedResult* ResultCache::find(PartitionIndex v) const {
    auto it = entries_.find(v);
    return it == entries_.end() ? nullptr : &it->second;
}

std::optional<FeaturePoint> FeatureCache::find(PartitionIndex v, double t) const {
    if (enabled_) {
        std::lock_guard lock(mutex_);
        if (auto it = entries_.find({v, std::llround(t * 1000.0)}); it != entries_.end()) {
            ++hits_;
            return it->second;
        }
    }
    ++misses_;
    return std::nullopt;
}

void FeatureCache::put(PartitionIndex v, double t, FeaturePoint p) {
    if (!enabled_) return;
    std::lock_guard lock(mutex_);
    entries_[{v, std::llround(t * 1000.0)}] = p;
}

std::size_t FeatureCache::size() const {
    std::lock_guard lock(mutex_);
    return entries_.size();
}

}  // namespace popmon
