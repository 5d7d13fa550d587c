/* Compiled as C: the public header must be self-contained C. */
#include "slgan/slgan.h"

int slgan_c_header_check(void) {
  slgan_bundle_info info = {0};
  slgan_status s = slgan_dataset_counts(0, 0, 0);
  return (int)s + (int)info.resolution + (int)SLGAN_MAKEUP;
}
