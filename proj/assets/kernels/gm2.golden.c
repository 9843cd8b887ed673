void test(Bdyn, PB, R, Quu) {
    config_ex(WEIGHT_STATIONARY, NO_ACTIVATION, true, false);
    config_ld(4 * sizeof(float), 0);
    config_ld(4 * sizeof(float), 1);
    config_ld(4 * sizeof(float), 2);
    config_st(4 * sizeof(float));

    static uint32_t Bdyn_sp_addr = 0;
    static uint32_t PB_sp_addr = 12;
    static uint32_t R_sp_addr = 24;
    static uint32_t Quu_acc_addr = 1 << 31;

    // Bdyn as 4x4 tiles, tile (ib, kb) at row (ib * 3 + kb) * 4
    for (int ib = 0; ib < 1; ib++) {
        for (int kb = 0; kb < 3; kb++) {
            mvin(Bdyn + kb * 16 + ib * 4, Bdyn_sp_addr + (ib * 3 + kb) * 4, 4, 4);
        }
    }
    for (int kb = 0; kb < 3; kb++) {
        for (int jb = 0; jb < 1; jb++) {
            mvin2(PB + kb * 16 + jb * 4, PB_sp_addr + (kb * 1 + jb) * 4, 4, 4);
        }
    }
    for (int ib = 0; ib < 1; ib++) {
        for (int jb = 0; jb < 1; jb++) {
            mvin3(R + ib * 16 + jb * 4, R_sp_addr + (ib * 1 + jb) * 4, 4, 4);
        }
    }

    for (int ib = 0; ib < 1; ib++) {
        for (int jb = 0; jb < 1; jb++) {
            for (int kb = 0; kb < 3; kb++) {
                uint32_t c_addr = Quu_acc_addr + (ib * 1 + jb) * 4;
                if (kb > 0) c_addr |= 1 << 30;
                preload(PB_sp_addr + (kb * 1 + jb) * 4, c_addr, 4, 4, 4, 4);
                compute_preloaded(Bdyn_sp_addr + (ib * 3 + kb) * 4, kb == 0 ? R_sp_addr + (ib * 1 + jb) * 4 : 0xffffffff, 4, 4, 4, 4);
            }
        }
    }

    for (int ib = 0; ib < 1; ib++) {
        mvout(Quu + ib * 16, Quu_acc_addr + ib * 4, 4, 4);
    }
    fence();
}
