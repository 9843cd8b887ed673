void test(Pinf36, B36, PB36) {
    config_ex(WEIGHT_STATIONARY, NO_ACTIVATION, false, false);
    config_ld(36 * sizeof(float), 0);
    config_ld(12 * sizeof(float), 1);
    config_st(12 * sizeof(float));

    static uint32_t Pinf36_sp_addr = 0;
    static uint32_t B36_sp_addr = 324;
    static uint32_t PB36_acc_addr = 1 << 31;

    // Pinf36 as 4x4 tiles, tile (ib, kb) at row (ib * 9 + kb) * 4
    for (int ib = 0; ib < 9; ib++) {
        for (int kb = 0; kb < 9; kb++) {
            mvin(Pinf36 + ib * 144 + kb * 4, Pinf36_sp_addr + (ib * 9 + kb) * 4, 4, 4);
        }
    }
    for (int kb = 0; kb < 9; kb++) {
        for (int jb = 0; jb < 3; jb++) {
            mvin2(B36 + kb * 48 + jb * 4, B36_sp_addr + (kb * 3 + jb) * 4, 4, 4);
        }
    }

    for (int ib = 0; ib < 9; ib++) {
        for (int jb = 0; jb < 3; jb++) {
            for (int kb = 0; kb < 9; kb++) {
                uint32_t c_addr = PB36_acc_addr + (ib * 3 + jb) * 4;
                if (kb > 0) c_addr |= 1 << 30;
                preload(B36_sp_addr + (kb * 3 + jb) * 4, c_addr, 4, 4, 4, 4);
                compute_preloaded(Pinf36_sp_addr + (ib * 9 + kb) * 4, 0xffffffff, 4, 4, 4, 4);
            }
        }
    }

    for (int ib = 0; ib < 9; ib++) {
        mvout(PB36 + ib * 48, PB36_acc_addr + ib * 12, 12, 4);
    }
    fence();
}
