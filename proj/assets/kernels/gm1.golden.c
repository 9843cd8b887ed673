void test(Pinf, Bdyn, PB) {
    config_ex(WEIGHT_STATIONARY, NO_ACTIVATION, false, false);
    config_ld(12 * sizeof(float), 0);
    config_ld(4 * sizeof(float), 1);
    config_st(4 * sizeof(float));

    static uint32_t Pinf_sp_addr = 0;
    static uint32_t Bdyn_sp_addr = 36;
    static uint32_t PB_acc_addr = 1 << 31;

    // Pinf as 4x4 tiles, tile (ib, kb) at row (ib * 3 + kb) * 4
    for (int ib = 0; ib < 3; ib++) {
        for (int kb = 0; kb < 3; kb++) {
            mvin(Pinf + ib * 48 + kb * 4, Pinf_sp_addr + (ib * 3 + kb) * 4, 4, 4);
        }
    }
    for (int kb = 0; kb < 3; kb++) {
        for (int jb = 0; jb < 1; jb++) {
            mvin2(Bdyn + kb * 16 + jb * 4, Bdyn_sp_addr + (kb * 1 + jb) * 4, 4, 4);
        }
    }

    for (int ib = 0; ib < 3; ib++) {
        for (int jb = 0; jb < 1; jb++) {
            for (int kb = 0; kb < 3; kb++) {
                uint32_t c_addr = PB_acc_addr + (ib * 1 + jb) * 4;
                if (kb > 0) c_addr |= 1 << 30;
                preload(Bdyn_sp_addr + (kb * 1 + jb) * 4, c_addr, 4, 4, 4, 4);
                compute_preloaded(Pinf_sp_addr + (ib * 3 + kb) * 4, 0xffffffff, 4, 4, 4, 4);
            }
        }
    }

    for (int ib = 0; ib < 3; ib++) {
        mvout(PB + ib * 16, PB_acc_addr + ib * 4, 4, 4);
    }
    fence();
}
