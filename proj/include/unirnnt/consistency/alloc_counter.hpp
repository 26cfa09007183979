#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <new>

// Global heap accounting. A binary opts in by expanding
// UNIRNNT_INSTALL_ALLOCATION_COUNTER() in exactly one translation unit, which
// replaces the global operator new/delete family with size-tracking versions.

namespace unirnnt::alloc_counter {

inline std::atomic<bool> installed{false};
inline std::atomic<std::int64_t> current{0};
inline std::atomic<std::int64_t> peak{0};

inline void on_alloc(std::size_t n) noexcept {
  const std::int64_t now = current.fetch_add(static_cast<std::int64_t>(n)) + static_cast<std::int64_t>(n);
  std::int64_t seen = peak.load();
  while (now > seen && !peak.compare_exchange_weak(seen, now)) {
  }
}

inline void on_free(std::size_t n) noexcept { current.fetch_sub(static_cast<std::int64_t>(n)); }

// Header in front of each block; keeps 16-byte alignment of the payload.
// Kept out of line so the header arithmetic is not inlined into delete
// sites, where GCC misreads it as out-of-bounds access.
inline constexpr std::size_t kHeader = 16;

[[gnu::noinline]] inline void* allocate(std::size_t n) noexcept {
  auto* raw = static_cast<unsigned char*>(std::malloc(n + kHeader));
  if (!raw) return nullptr;
  *reinterpret_cast<std::size_t*>(raw) = n;
  on_alloc(n);
  return raw + kHeader;
}

[[gnu::noinline]] inline void release(void* p) noexcept {
  if (!p) return;
  auto* raw = static_cast<unsigned char*>(p) - kHeader;
  on_free(*reinterpret_cast<std::size_t*>(raw));
  std::free(raw);
}

/// Peak bytes allocated above the level live at construction.
class PeakScope {
 public:
  PeakScope() noexcept : base_(current.load()) { peak.store(base_); }
  std::int64_t peak_bytes() const noexcept { return peak.load() - base_; }

 private:
  std::int64_t base_;
};

}  // namespace unirnnt::alloc_counter

#define UNIRNNT_INSTALL_ALLOCATION_COUNTER()                                                     \
  void* operator new(std::size_t n) {                                                           \
    if (void* p = ::unirnnt::alloc_counter::allocate(n)) return p;                              \
    throw std::bad_alloc();                                                                     \
  }                                                                                             \
  void* operator new[](std::size_t n) {                                                         \
    if (void* p = ::unirnnt::alloc_counter::allocate(n)) return p;                              \
    throw std::bad_alloc();                                                                     \
  }                                                                                             \
  void* operator new(std::size_t n, const std::nothrow_t&) noexcept {                           \
    return ::unirnnt::alloc_counter::allocate(n);                                               \
  }                                                                                             \
  void* operator new[](std::size_t n, const std::nothrow_t&) noexcept {                         \
    return ::unirnnt::alloc_counter::allocate(n);                                               \
  }                                                                                             \
  void operator delete(void* p) noexcept { ::unirnnt::alloc_counter::release(p); }              \
  void operator delete[](void* p) noexcept { ::unirnnt::alloc_counter::release(p); }            \
  void operator delete(void* p, std::size_t) noexcept { ::unirnnt::alloc_counter::release(p); } \
  void operator delete[](void* p, std::size_t) noexcept {                                       \
    ::unirnnt::alloc_counter::release(p);                                                       \
  }                                                                                             \
  void operator delete(void* p, const std::nothrow_t&) noexcept {                               \
    ::unirnnt::alloc_counter::release(p);                                                       \
  }                                                                                             \
  void operator delete[](void* p, const std::nothrow_t&) noexcept {                             \
    ::unirnnt::alloc_counter::release(p);                                                       \
  }                                                                                             \
  [[maybe_unused]] static const bool unirnnt_alloc_counter_flag_ =                              \
      (::unirnnt::alloc_counter::installed.store(true), true)
